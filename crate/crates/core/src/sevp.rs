//! Symmetric matrix to symmetric band form by orthogonal similarity.
//!
//! Only the lower triangle is kept current during the reduction. Step `k`
//! factorizes the panel `A[k+w:n, k:k+b']`, applies the reflectors from the
//! left to the intermediate block `A[k+w:n, k+b':k+w]` and from both sides to
//! the trailing block `A[k+w:n, k+w:n]`, then advances by `b'`.
//!
//! The look-ahead variants factorize the next panel on the T_S group while
//! T_P finishes the rest of the current update. V1 needs `2b <= w`, so the
//! next panel lies inside the intermediate block. V2 also covers `2b > w`,
//! where it spills into the trailing block: it first updates the intermediate
//! block and the update workspace, then updates the trailing columns the next
//! panel needs on T_S while T_P updates the others.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::flops::FlopSnapshot;
use crate::householder::{
    apply_wy_left, apply_wy_right, qr_panel, sym_update_workspace, PanelFactors,
    DEFAULT_INNER_BLOCK,
};
use crate::kernels::syr2k_lower;
use crate::matrix::Matrix;
use crate::runtime::{
    EventTrace, ExecGroups, PhasePlan, Region, Runtime, SharedMat, Task, TaskKind, MAT_A, MAT_Q,
    MAT_WORK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SevpVariant {
    Reference,
    V1,
    V2,
}

/// Where V2 places the intermediate-block update during its first phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum V2Mapping {
    /// On T_S, while T_P builds the update workspace.
    #[default]
    A1OnTs,
    /// On all workers, followed by the workspace.
    A1OnAll,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SevpConfig {
    pub w: usize,
    pub b: usize,
    pub variant: SevpVariant,
    pub v2_mapping: V2Mapping,
    pub accumulate_q: bool,
    pub inner_b: usize,
}

impl SevpConfig {
    pub fn new(w: usize, b: usize, variant: SevpVariant) -> Self {
        SevpConfig {
            w,
            b,
            variant,
            v2_mapping: V2Mapping::default(),
            accumulate_q: false,
            inner_b: DEFAULT_INNER_BLOCK,
        }
    }

    pub fn with_mapping(mut self, m: V2Mapping) -> Self {
        self.v2_mapping = m;
        self
    }

    pub fn with_q(mut self, on: bool) -> Self {
        self.accumulate_q = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.w == 0 {
            return Err(Error::Config("bandwidth w must be at least 1".into()));
        }
        if self.b == 0 || self.b > self.w {
            return Err(Error::Config(format!(
                "block size b = {} must satisfy 1 <= b <= w = {}",
                self.b, self.w
            )));
        }
        if self.inner_b == 0 {
            return Err(Error::Config("inner block size must be at least 1".into()));
        }
        if self.variant == SevpVariant::V1 && 2 * self.b > self.w {
            return Err(Error::Config(format!(
                "variant V1 requires 2b <= w (b = {}, w = {})",
                self.b, self.w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SevpResult {
    /// Symmetric band matrix with entries beyond the band set to zero.
    pub band: Matrix,
    /// Accumulated orthogonal factor with `Qᵀ A Q = band`, when requested.
    pub q: Option<Matrix>,
    pub flops: FlopSnapshot,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// `round(4 n^3 / 3)`.
pub fn sevp_nominal_flops(n: u64) -> u64 {
    let x = 4 * (n as u128).pow(3);
    ((x + 1) / 3) as u64
}

/// Width of the panel whose leading column is `k`, or 0 when no panel with
/// reflectors of length at least 2 remains.
pub fn panel_width(n: usize, w: usize, b: usize, k: usize) -> usize {
    let j = n.saturating_sub(k + w);
    if j < 2 {
        0
    } else {
        b.min(j - 1)
    }
}

/// Reduction state, advanced one panel at a time.
#[derive(Debug)]
pub struct SevpState {
    a: Matrix,
    q: Option<Matrix>,
    cfg: SevpConfig,
    /// Leading column of the current panel.
    k: usize,
    iter: usize,
    /// Factors of the current panel when it was factorized ahead.
    ahead: Option<PanelFactors>,
    warnings: Vec<String>,
}

impl SevpState {
    pub fn new(a: &Matrix, cfg: &SevpConfig) -> Result<Self> {
        cfg.validate()?;
        if !a.is_square() || a.rows() == 0 {
            return Err(Error::Dimension(format!(
                "symmetric reduction needs a non-empty square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let asym = a.asymmetry();
        if asym > 1e-12 * a.frobenius() {
            return Err(Error::NotSymmetric(asym));
        }
        let mut warnings = Vec::new();
        if cfg.variant == SevpVariant::V2 && 2 * cfg.b <= cfg.w {
            warnings.push(format!(
                "V2 with 2b <= w (b = {}, w = {}): the next panel fits in the intermediate block, V1 is the intended variant",
                cfg.b, cfg.w
            ));
        }
        let n = a.rows();
        Ok(SevpState {
            a: a.clone(),
            q: cfg.accumulate_q.then(|| Matrix::identity(n)),
            cfg: cfg.clone(),
            k: 0,
            iter: 0,
            ahead: None,
            warnings,
        })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    pub fn is_done(&self) -> bool {
        self.cfg.w >= self.n() || panel_width(self.n(), self.cfg.w, self.cfg.b, self.k) == 0
    }

    /// Current working matrix (lower triangle authoritative).
    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    /// Runs one iteration with the configured variant. Returns `false` once
    /// nothing is left to reduce.
    pub fn step(&mut self, rt: &Runtime) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        match self.cfg.variant {
            SevpVariant::Reference => self.step_reference(rt)?,
            SevpVariant::V1 => self.step_v1(rt)?,
            SevpVariant::V2 => self.step_v2(rt)?,
        }
        Ok(true)
    }

    fn geometry(&self) -> Geometry {
        let (n, w, b) = (self.n(), self.cfg.w, self.cfg.b);
        let k = self.k;
        let bw = panel_width(n, w, b, k);
        let next = panel_width(n, w, b, k + bw);
        Geometry { n, w, k, bw, next }
    }

    fn step_reference(&mut self, rt: &Runtime) -> Result<()> {
        let g = self.geometry();
        let (iter, inner_b) = (self.iter, self.cfg.inner_b);
        let fac = OnceLock::new();
        let x3 = OnceLock::new();
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let qm = self.q.as_mut().map(|q| SharedMat::new(MAT_Q, q));
            let mut tasks = vec![
                qr_task(&sm, iter, g.k, g.bw, g.w, inner_b, &fac),
                left_task(&sm, "a1", iter, &g, g.k + g.bw..g.k + g.w, &fac),
                workspace_task(&sm, iter, &g, &fac, &x3),
                syr2k_task(&sm, "a2", iter, &g, 0..g.j(), &fac, &x3),
            ];
            if let Some(qm) = &qm {
                tasks.push(accumulate_task(qm, iter, &g, &fac));
            }
            rt.run_sequence(&format!("sevp-ref@{iter}"), tasks)?;
        }
        self.advance(g, None);
        Ok(())
    }

    fn prologue(&mut self, rt: &Runtime, g: &Geometry) -> Result<PanelFactors> {
        if let Some(f) = self.ahead.take() {
            return Ok(f);
        }
        let fac = OnceLock::new();
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let t = qr_task(&sm, self.iter, g.k, g.bw, g.w, self.cfg.inner_b, &fac);
            rt.run_sequence("sevp-prologue", vec![t])?;
        }
        Ok(fac.into_inner().expect("panel factorized"))
    }

    fn step_v1(&mut self, rt: &Runtime) -> Result<()> {
        let g = self.geometry();
        let cur = self.prologue(rt, &g)?;
        let cur = OnceLock::from(cur);
        let (iter, inner_b) = (self.iter, self.cfg.inner_b);
        let next = OnceLock::new();
        let x3 = OnceLock::new();
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let qm = self.q.as_mut().map(|q| SharedMat::new(MAT_Q, q));
            let split = g.k + g.bw + g.next;
            let mut plan = PhasePlan::new(format!("sevp-v1@{iter}"));
            if g.next > 0 {
                plan = plan
                    .seq(left_task(&sm, "a1l", iter, &g, g.k + g.bw..split, &cur))
                    .seq(qr_task(
                        &sm,
                        iter + 1,
                        g.k + g.bw,
                        g.next,
                        g.w,
                        inner_b,
                        &next,
                    ));
            }
            plan = plan
                .par(left_task(&sm, "a1r", iter, &g, split..g.k + g.w, &cur))
                .par(workspace_task(&sm, iter, &g, &cur, &x3))
                .par(syr2k_task(&sm, "a2", iter, &g, 0..g.j(), &cur, &x3));
            if let Some(qm) = &qm {
                plan = plan.par(accumulate_task(qm, iter, &g, &cur));
            }
            rt.run_phase(plan)?;
        }
        self.advance(g, next.into_inner());
        Ok(())
    }

    fn step_v2(&mut self, rt: &Runtime) -> Result<()> {
        let g = self.geometry();
        let cur = OnceLock::from(self.prologue(rt, &g)?);
        let (iter, inner_b) = (self.iter, self.cfg.inner_b);
        let next = OnceLock::new();
        let x3 = OnceLock::new();
        // Trailing columns the next panel reaches into.
        let spill = (g.bw + g.next).saturating_sub(g.w);
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let qm = self.q.as_mut().map(|q| SharedMat::new(MAT_Q, q));
            let a1 = left_task(&sm, "a1", iter, &g, g.k + g.bw..g.k + g.w, &cur);
            let ws = workspace_task(&sm, iter, &g, &cur, &x3);
            match self.cfg.v2_mapping {
                V2Mapping::A1OnTs => {
                    rt.run_phase(PhasePlan::new(format!("sevp-v2a@{iter}")).seq(a1).par(ws))?;
                }
                V2Mapping::A1OnAll => {
                    rt.run_sequence(&format!("sevp-v2a@{iter}"), vec![a1, ws])?;
                }
            }
            let mut plan = PhasePlan::new(format!("sevp-v2b@{iter}"));
            if g.next > 0 {
                if spill > 0 {
                    plan = plan.seq(syr2k_task(&sm, "a2l", iter, &g, 0..spill, &cur, &x3));
                }
                plan = plan.seq(qr_task(
                    &sm,
                    iter + 1,
                    g.k + g.bw,
                    g.next,
                    g.w,
                    inner_b,
                    &next,
                ));
            }
            plan = plan.par(syr2k_task(&sm, "a2r", iter, &g, spill..g.j(), &cur, &x3));
            if let Some(qm) = &qm {
                plan = plan.par(accumulate_task(qm, iter, &g, &cur));
            }
            rt.run_phase(plan)?;
        }
        self.advance(g, next.into_inner());
        Ok(())
    }

    fn advance(&mut self, g: Geometry, ahead: Option<PanelFactors>) {
        self.k += g.bw;
        self.iter += 1;
        self.ahead = ahead;
    }

    /// Mirrors the lower triangle and zeroes everything beyond the band.
    pub fn finish(self) -> (Matrix, Option<Matrix>, Vec<String>) {
        let mut band = self.a;
        let (n, w) = (band.rows(), self.cfg.w);
        band.mirror_lower();
        for j in 0..n {
            for i in 0..n {
                if i.abs_diff(j) > w {
                    band[(i, j)] = 0.0;
                }
            }
        }
        (band, self.q, self.warnings)
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    w: usize,
    /// Leading column of the current panel.
    k: usize,
    /// Current panel width.
    bw: usize,
    /// Next panel width (0 if none).
    next: usize,
}

impl Geometry {
    /// Order of the trailing block.
    fn j(&self) -> usize {
        self.n - self.k - self.w
    }

    fn trail(&self) -> std::ops::Range<usize> {
        self.k + self.w..self.n
    }

    fn panel(&self) -> Region {
        Region::a(self.trail(), self.k..self.k + self.bw)
    }
}

fn qr_task<'a>(
    sm: &'a SharedMat<'a>,
    iter: usize,
    k: usize,
    bw: usize,
    w: usize,
    inner_b: usize,
    out: &'a OnceLock<PanelFactors>,
) -> Task<'a> {
    let rows = k + w..sm.rows();
    let cols = k..k + bw;
    let region = Region::a(rows.clone(), cols.clone());
    Task::new(format!("qr@{iter}"), TaskKind::QrPanel, iter, move |ctx| {
        let p = ctx.write(sm, rows, cols);
        let f = qr_panel(ctx.kern(), p, inner_b)?;
        out.set(f).expect("panel factorized once");
        Ok(())
    })
    .writes(region)
}

fn factors(f: &OnceLock<PanelFactors>) -> &PanelFactors {
    f.get().expect("panel factors available")
}

fn left_task<'a>(
    sm: &'a SharedMat<'a>,
    name: &str,
    iter: usize,
    g: &Geometry,
    cols: std::ops::Range<usize>,
    fac: &'a OnceLock<PanelFactors>,
) -> Task<'a> {
    let rows = g.trail();
    let region = Region::a(rows.clone(), cols.clone());
    // An empty target touches nothing, not even the panel.
    let panel = if region.is_empty() {
        region.clone()
    } else {
        g.panel()
    };
    Task::new(
        format!("{name}@{iter}"),
        TaskKind::LeftUpdate,
        iter,
        move |ctx| {
            let blk = ctx.write(sm, rows, cols);
            apply_wy_left(ctx.kern(), blk, factors(fac))
        },
    )
    .reads(panel)
    .writes(region)
}

fn workspace_task<'a>(
    sm: &'a SharedMat<'a>,
    iter: usize,
    g: &Geometry,
    fac: &'a OnceLock<PanelFactors>,
    out: &'a OnceLock<Matrix>,
) -> Task<'a> {
    let trail = g.trail();
    let a2 = Region::a(trail.clone(), trail.clone());
    Task::new(
        format!("x3@{iter}"),
        TaskKind::Workspace,
        iter,
        move |ctx| {
            let a2 = ctx.read(sm, trail.clone(), trail);
            let x3 = sym_update_workspace(ctx.kern(), a2, factors(fac))?;
            out.set(x3).expect("workspace built once");
            Ok(())
        },
    )
    .reads(g.panel())
    .reads(a2)
    .writes(Region::new(MAT_WORK, 0..g.j(), 0..g.bw))
}

/// Two-sided update of trailing columns `cols` (relative to the trailing
/// block), lower triangle only.
fn syr2k_task<'a>(
    sm: &'a SharedMat<'a>,
    name: &str,
    iter: usize,
    g: &Geometry,
    cols: std::ops::Range<usize>,
    fac: &'a OnceLock<PanelFactors>,
    x3: &'a OnceLock<Matrix>,
) -> Task<'a> {
    let (j, base) = (g.j(), g.k + g.w);
    let rows = base + cols.start..g.n;
    let gcols = base + cols.start..base + cols.end;
    let region = Region::a(rows.clone(), gcols.clone());
    let c0 = cols.start;
    Task::new(
        format!("{name}@{iter}"),
        TaskKind::SymUpdate,
        iter,
        move |ctx| {
            let view = ctx.write(sm, rows, gcols);
            let x = x3.get().expect("workspace available");
            let f = factors(fac);
            syr2k_lower(
                ctx.kern(),
                x.view().sub(c0..j, 0..x.cols()),
                f.y.view().sub(c0..j, 0..f.width()),
                view,
                0,
            )
        },
    )
    .reads(g.panel())
    .reads(Region::new(MAT_WORK, 0..j, 0..g.bw))
    .writes(region)
}

fn accumulate_task<'a>(
    qm: &'a SharedMat<'a>,
    iter: usize,
    g: &Geometry,
    fac: &'a OnceLock<PanelFactors>,
) -> Task<'a> {
    let rows = 0..g.n;
    let cols = g.trail();
    let region = Region::new(MAT_Q, rows.clone(), cols.clone());
    Task::new(
        format!("q@{iter}"),
        TaskKind::Accumulate,
        iter,
        move |ctx| {
            let blk = ctx.write(qm, rows, cols);
            apply_wy_right(ctx.kern(), blk, factors(fac))
        },
    )
    .reads(g.panel())
    .writes(region)
}

/// Reduces symmetric `a` to band form, recording into `rt`.
pub fn reduce_sym_band_with(a: &Matrix, cfg: &SevpConfig, rt: &Runtime) -> Result<SevpResult> {
    let mut st = SevpState::new(a, cfg)?;
    let before = rt.snapshot_flops();
    while st.step(rt)? {}
    let flops = rt.snapshot_flops().since(&before);
    let iterations = st.iterations();
    let (band, q, warnings) = st.finish();
    Ok(SevpResult {
        band,
        q,
        flops,
        iterations,
        warnings,
    })
}

/// Reduces symmetric `a` to band form using the given worker groups.
pub fn reduce_sym_band(a: &Matrix, cfg: &SevpConfig, groups: ExecGroups) -> Result<SevpResult> {
    reduce_sym_band_with(a, cfg, &Runtime::new(groups))
}

/// Like [`reduce_sym_band`], also returning the event trace.
pub fn reduce_sym_band_traced(
    a: &Matrix,
    cfg: &SevpConfig,
    groups: ExecGroups,
) -> Result<(SevpResult, EventTrace)> {
    let rt = Runtime::new(groups);
    let res = reduce_sym_band_with(a, cfg, &rt)?;
    Ok((res, rt.take_trace()))
}
