//! Deterministic inputs, matrix text IO and the benchmark driver.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::depgraph::{self, Problem};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle;
use crate::runtime::{EventTrace, ExecGroups, Runtime};
use crate::sevp::{self, SevpConfig, SevpVariant};
use crate::svd::{self, SvdConfig, SvdForm, SvdVariant};

/// Uniform value in (0, 1) from the top 53 bits of one 64-bit draw.
fn unit(rng: &mut ChaCha20Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// m x n matrix of ChaCha20 uniforms in (0, 1), filled column by column.
pub fn gen_general(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::Config(format!(
            "matrix dimensions must be positive, got {m}x{n}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..m * n).map(|_| unit(&mut rng)).collect();
    Ok(Matrix::from_col_major(m, n, data))
}

/// `(G + Gᵀ) / 2` for `G = gen_general(n, n, seed)`.
pub fn gen_sym(n: usize, seed: u64) -> Result<Matrix> {
    let g = gen_general(n, n, seed)?;
    Ok(Matrix::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)])))
}

/// Writes `rows cols` and then every entry in column-major order, one per
/// line, with 17 significant digits.
pub fn write_matrix(a: &Matrix, mut out: impl Write) -> Result<()> {
    writeln!(out, "{} {}", a.rows(), a.cols())?;
    for j in 0..a.cols() {
        for v in a.col(j) {
            writeln!(out, "{v:.16e}")?;
        }
    }
    Ok(())
}

/// Parses the format produced by [`write_matrix`].
pub fn read_matrix(text: &str) -> Result<Matrix> {
    let mut tok = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        tok.next()
            .ok_or_else(|| Error::Parse(format!("missing {what}")))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
    };
    let (m, n) = (dim("row count")?, dim("column count")?);
    let data = tok
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value `{t}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if data.len() != m * n {
        return Err(Error::Parse(format!(
            "expected {} values for {m}x{n}, found {}",
            m * n,
            data.len()
        )));
    }
    Ok(Matrix::from_col_major(m, n, data))
}

pub fn save_matrix(a: &Matrix, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_matrix(a, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Matrix> {
    read_matrix(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    SevpRef,
    SevpV1,
    SevpV2,
    SvdTriband,
    SvdRef,
    SvdSim,
    SvdV1,
    SvdV2,
    Depgraph,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::SevpRef => "sevp-ref",
            Algo::SevpV1 => "sevp-v1",
            Algo::SevpV2 => "sevp-v2",
            Algo::SvdTriband => "svd-triband",
            Algo::SvdRef => "svd-ref",
            Algo::SvdSim => "svd-sim",
            Algo::SvdV1 => "svd-v1",
            Algo::SvdV2 => "svd-v2",
            Algo::Depgraph => "depgraph",
        }
    }

    fn is_sevp(self) -> bool {
        matches!(self, Algo::SevpRef | Algo::SevpV1 | Algo::SevpV2)
    }

    fn is_v1(self) -> bool {
        matches!(self, Algo::SevpV1 | Algo::SvdV1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Triband,
    Band,
}

/// Benchmark and analysis driver. CSV goes to stdout, diagnostics to stderr.
#[derive(Debug, Clone, Parser)]
#[command(name = "bandred", version)]
pub struct Args {
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Order (SEVP) or column count (SVD, dep-graph).
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Row count for SVD and dep-graph; defaults to n.
    #[arg(long)]
    pub m: Option<usize>,
    /// Target bandwidth; dep-graph derives it from --ratio when omitted.
    #[arg(long)]
    pub w: Option<usize>,
    /// Block size (panel width).
    #[arg(long, conflicts_with = "b_sweep")]
    pub b: Option<usize>,
    #[arg(long)]
    pub b_sweep: bool,
    #[arg(long, default_value_t = 16, requires = "b_sweep")]
    pub b_start: usize,
    /// Defaults to w, or w/2 for V1.
    #[arg(long, requires = "b_sweep")]
    pub b_end: Option<usize>,
    #[arg(long, default_value_t = 16, requires = "b_sweep")]
    pub b_step: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Total workers; defaults to the available parallelism, at least 2.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Workers in the panel group; defaults to 1 (0 when only one thread).
    #[arg(long)]
    pub ts: Option<usize>,
    #[arg(long)]
    pub verify: bool,
    /// Write the reduced matrix of the last run.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Read the input matrix instead of generating it; its shape overrides
    /// --n and --m.
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Write the event trace of the last run (task, group, start, end).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Dep-graph only: write the task DAG in DOT format.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "triband")]
    pub form: FormArg,
    /// Dep-graph only: w / b.
    #[arg(long)]
    pub ratio: Option<usize>,
}

pub const CSV_HEADER: &str = "algo,m,n,w,b,ts,tp,seconds,gflops,verify_max_dev,best";
pub const DEPGRAPH_HEADER: &str = "form,m,n,w,b,left_feasible,right_feasible,both_feasible";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub algo: String,
    pub m: usize,
    pub n: usize,
    pub w: usize,
    pub b: usize,
    pub ts: usize,
    pub tp: usize,
    pub seconds: f64,
    pub gflops: f64,
    pub verify_max_dev: Option<f64>,
    pub best: bool,
}

impl fmt::Display for BenchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dev = self
            .verify_max_dev
            .map(|d| format!("{d:.3e}"))
            .unwrap_or_default();
        write!(
            f,
            "{},{},{},{},{},{},{},{:.6e},{:.4},{},{}",
            self.algo,
            self.m,
            self.n,
            self.w,
            self.b,
            self.ts,
            self.tp,
            self.seconds,
            self.gflops,
            dev,
            u8::from(self.best)
        )
    }
}

/// Outcome of one reduction: record plus data for --dump / --trace.
struct RunOut {
    record: BenchRecord,
    band: Matrix,
    trace: EventTrace,
    verified: bool,
}

fn groups_for(args: &Args) -> Result<ExecGroups> {
    let total = args.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map_or(2, |p| p.get())
            .max(2)
    });
    let ts = args.ts.unwrap_or(usize::from(total > 1));
    ExecGroups::new(total, ts)
}

fn input_matrix(args: &Args) -> Result<Matrix> {
    if let Some(p) = &args.load {
        return load_matrix(p);
    }
    if args.algo.is_sevp() {
        gen_sym(args.n, args.seed)
    } else {
        gen_general(args.m.unwrap_or(args.n), args.n, args.seed)
    }
}

enum Job {
    Sevp(SevpConfig),
    Svd(SvdConfig),
}

fn job(algo: Algo, w: usize, b: usize) -> Result<Job> {
    let job = match algo {
        Algo::SevpRef => Job::Sevp(SevpConfig::new(w, b, SevpVariant::Reference)),
        Algo::SevpV1 => Job::Sevp(SevpConfig::new(w, b, SevpVariant::V1)),
        Algo::SevpV2 => Job::Sevp(SevpConfig::new(w, b, SevpVariant::V2)),
        Algo::SvdTriband => Job::Svd(SvdConfig::tri_band(w, b)),
        Algo::SvdRef => Job::Svd(SvdConfig::band(w, b, SvdVariant::Reference)),
        Algo::SvdSim => Job::Svd(SvdConfig::band(w, b, SvdVariant::Simultaneous)),
        Algo::SvdV1 => Job::Svd(SvdConfig::band(w, b, SvdVariant::V1)),
        Algo::SvdV2 => Job::Svd(SvdConfig::band(w, b, SvdVariant::V2)),
        Algo::Depgraph => return Err(Error::Config("depgraph is not a reduction".into())),
    };
    match &job {
        Job::Sevp(c) => c.validate()?,
        Job::Svd(c) => c.validate()?,
    }
    Ok(job)
}

fn check_verify_limits(algo: Algo, a: &Matrix) -> Result<()> {
    let (m, n) = (a.rows(), a.cols());
    let ok = if algo.is_sevp() {
        n <= oracle::EIGEN_MAX_ORDER
    } else {
        m.min(n) <= oracle::SVD_MAX_MIN_DIM
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "--verify supports n <= {} (SEVP) or min(m, n) <= {} (SVD), got {m}x{n}",
            oracle::EIGEN_MAX_ORDER,
            oracle::SVD_MAX_MIN_DIM
        )))
    }
}

fn run_one(args: &Args, a: &Matrix, w: usize, b: usize, groups: ExecGroups) -> Result<RunOut> {
    let (m, n) = (a.rows(), a.cols());
    let rt = Runtime::new(groups);
    let (band, warnings, seconds, nominal) = match job(args.algo, w, b)? {
        Job::Sevp(cfg) => {
            let t0 = Instant::now();
            let r = sevp::reduce_sym_band_with(a, &cfg, &rt)?;
            let s = t0.elapsed().as_secs_f64();
            (r.band, r.warnings, s, sevp::sevp_nominal_flops(n as u64))
        }
        Job::Svd(cfg) => {
            let t0 = Instant::now();
            let r = svd::reduce_with(a, &cfg, &rt)?;
            let s = t0.elapsed().as_secs_f64();
            (
                r.band,
                r.warnings,
                s,
                svd::svd_nominal_flops(m as u64, n as u64),
            )
        }
    };
    for msg in warnings {
        eprintln!("warning: {msg}");
    }
    let (verify_max_dev, verified) = if args.verify {
        verify(args.algo, a, &band, w)?
    } else {
        (None, true)
    };
    let seconds = seconds.max(f64::MIN_POSITIVE);
    Ok(RunOut {
        record: BenchRecord {
            algo: args.algo.name().to_string(),
            m,
            n,
            w,
            b,
            ts: groups.ts_count(),
            tp: groups.tp_count(),
            seconds,
            gflops: nominal as f64 / seconds / 1e9,
            verify_max_dev,
            best: false,
        },
        band,
        trace: rt.take_trace(),
        verified,
    })
}

/// Largest deviation of the sorted spectrum plus any stored value outside the
/// band; passes when both stay within `1e-11 ||A||_2`.
fn verify(algo: Algo, a: &Matrix, band: &Matrix, w: usize) -> Result<(Option<f64>, bool)> {
    let (rep, norm) = if algo.is_sevp() {
        let rep = oracle::sym_band_report(a, band, w)?;
        let norm = oracle::jacobi_eigen(a)?
            .iter()
            .fold(0.0f64, |x, v| x.max(v.abs()));
        (rep, norm)
    } else {
        let lower = if algo == Algo::SvdTriband { 0 } else { w };
        (
            oracle::svd_band_report(a, band, lower, w)?,
            oracle::spectral_norm(a)?,
        )
    };
    let dev = rep.residual.max(rep.max_abs_offband);
    let tol = 1e-11 * norm.max(f64::MIN_POSITIVE);
    Ok((Some(dev), dev <= tol && rep.max_abs_offband == 0.0))
}

fn sweep_values(args: &Args, w: usize) -> Result<Vec<usize>> {
    let cap = if args.algo.is_v1() { w / 2 } else { w };
    let end = args.b_end.unwrap_or(cap).min(cap);
    if args.b_start == 0 || args.b_step == 0 {
        return Err(Error::Config(
            "--b-start and --b-step must be positive".into(),
        ));
    }
    let bs: Vec<usize> = (args.b_start..=end).step_by(args.b_step).collect();
    if bs.is_empty() {
        return Err(Error::Config(format!(
            "empty block sweep: start {} exceeds the limit {end} for {} with w = {w}",
            args.b_start,
            args.algo.name()
        )));
    }
    Ok(bs)
}

fn run_depgraph(args: &Args, out: &mut dyn Write) -> Result<bool> {
    let b = args
        .b
        .ok_or_else(|| Error::Config("--algo depgraph needs --b".into()))?;
    let w = match (args.w, args.ratio) {
        (Some(w), Some(r)) if w != r * b => {
            return Err(Error::Config(format!(
                "--w {w} disagrees with --ratio {r} * --b {b}"
            )))
        }
        (Some(w), _) => w,
        (None, Some(r)) => r * b,
        (None, None) => return Err(Error::Config("--algo depgraph needs --ratio or --w".into())),
    };
    let form = match args.form {
        FormArg::Triband => SvdForm::TriangularBand,
        FormArg::Band => SvdForm::Band,
    };
    let (m, n) = (args.m.unwrap_or(args.n), args.n);
    let p = Problem::new(m, n, w, b, form);
    let rep = depgraph::analyze_overlap(&p)?;
    writeln!(out, "{DEPGRAPH_HEADER}")?;
    writeln!(
        out,
        "{},{m},{n},{w},{b},{},{},{}",
        match args.form {
            FormArg::Triband => "triband",
            FormArg::Band => "band",
        },
        rep.left_feasible,
        rep.right_feasible,
        rep.both_feasible
    )?;
    if let Some(path) = &args.dot {
        let dag = depgraph::build_dag(depgraph::enumerate_tasks(&p)?);
        std::fs::write(path, dag.to_dot())?;
    }
    Ok(true)
}

/// Runs the driver; returns whether every verification passed.
pub fn run(args: &Args, out: &mut dyn Write) -> Result<bool> {
    if args.algo == Algo::Depgraph {
        return run_depgraph(args, out);
    }
    if args.algo.is_sevp() && args.m.is_some() {
        return Err(Error::Config("--m applies to SVD algorithms only".into()));
    }
    if args.dot.is_some() || args.ratio.is_some() {
        return Err(Error::Config(
            "--dot and --ratio apply to --algo depgraph only".into(),
        ));
    }
    let w = args
        .w
        .ok_or_else(|| Error::Config("--w is required".into()))?;
    let groups = groups_for(args)?;
    let a = input_matrix(args)?;
    let bs = if args.b_sweep {
        sweep_values(args, w)?
    } else {
        vec![args
            .b
            .ok_or_else(|| Error::Config("--b or --b-sweep is required".into()))?]
    };
    for &b in &bs {
        job(args.algo, w, b)?;
    }
    if args.verify {
        check_verify_limits(args.algo, &a)?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    let mut all_ok = true;
    let mut best: Option<BenchRecord> = None;
    let mut last = None;
    for b in bs {
        let r = run_one(args, &a, w, b, groups)?;
        writeln!(out, "{}", r.record)?;
        all_ok &= r.verified;
        if best.as_ref().is_none_or(|x| r.record.gflops > x.gflops) {
            best = Some(r.record.clone());
        }
        last = Some(r);
    }
    if args.b_sweep {
        if let Some(mut rec) = best {
            rec.best = true;
            writeln!(out, "{rec}")?;
        }
    }
    let last = last.expect("at least one block size");
    if let Some(p) = &args.dump {
        save_matrix(&last.band, p)?;
    }
    if let Some(p) = &args.trace {
        last.trace.dump(BufWriter::new(File::create(p)?))?;
    }
    if !all_ok {
        eprintln!("verification failed");
    }
    Ok(all_ok)
}

/// Parses `argv`, runs, and maps the outcome to a process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&args, &mut lock) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
