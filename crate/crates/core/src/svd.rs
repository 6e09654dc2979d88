//! General matrix to upper triangular-band or band form by two-sided
//! orthogonal equivalence, preserving singular values.
//!
//! Triangular-band step `k`: QR of `A[k:m, k:k+b]` and its left update,
//! then LQ of `A[k:k+b, k+w:n]` and its right update.
//!
//! Band step `k`: QR of `B0 = A[k+w:m, k:k+b]` updating `B1 = A[k+w:m,
//! k+b:k+w]` and `D = A[k+w:m, k+w:n]` from the left, and LQ of `C0 =
//! A[k:k+b, k+w:n]` updating `C1 = A[k+b:k+w, k+w:n]` and `D` from the right.
//! The LQ does not depend on the same step's left update, which is what makes
//! look-ahead on both sides possible.

use std::ops::Range;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::flops::FlopSnapshot;
use crate::householder::{
    apply_wy_left, apply_wy_right, lq_panel, qr_panel, PanelFactors, DEFAULT_INNER_BLOCK,
};
use crate::kernels::{matmul, Op};
use crate::matrix::Matrix;
use crate::runtime::{
    EventTrace, ExecGroups, PhasePlan, Region, Runtime, SharedMat, Task, TaskKind, MAT_A, MAT_WORK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SvdForm {
    /// Upper triangular with upper bandwidth w.
    TriangularBand,
    /// Lower and upper bandwidth w.
    Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SvdVariant {
    /// Left then right updates, each applied separately.
    Reference,
    /// Trailing block updated from both sides in one fused product.
    Simultaneous,
    /// Look-ahead for `2b <= w`, built on Reference.
    V1,
    /// Look-ahead for any `b <= w`, built on Simultaneous.
    V2,
}

/// Where V2 places the B1 and C1 updates during its first phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SvdV2Mapping {
    /// On T_S, while T_P builds the fused-update workspace.
    #[default]
    B1C1OnTs,
    /// On all workers, followed by the workspace.
    B1C1OnAll,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvdConfig {
    pub w: usize,
    pub b: usize,
    pub form: SvdForm,
    pub variant: SvdVariant,
    pub v2_mapping: SvdV2Mapping,
    pub inner_b: usize,
}

impl SvdConfig {
    pub fn new(w: usize, b: usize, form: SvdForm, variant: SvdVariant) -> Self {
        SvdConfig {
            w,
            b,
            form,
            variant,
            v2_mapping: SvdV2Mapping::default(),
            inner_b: DEFAULT_INNER_BLOCK,
        }
    }

    pub fn band(w: usize, b: usize, variant: SvdVariant) -> Self {
        Self::new(w, b, SvdForm::Band, variant)
    }

    pub fn tri_band(w: usize, b: usize) -> Self {
        Self::new(w, b, SvdForm::TriangularBand, SvdVariant::Reference)
    }

    pub fn with_mapping(mut self, m: SvdV2Mapping) -> Self {
        self.v2_mapping = m;
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
        if self.form == SvdForm::TriangularBand && self.variant != SvdVariant::Reference {
            return Err(Error::Config(format!(
                "triangular-band form only supports the Reference variant, got {:?}",
                self.variant
            )));
        }
        if self.variant == SvdVariant::V1 && 2 * self.b > self.w {
            return Err(Error::Config(format!(
                "variant V1 requires 2b <= w (b = {}, w = {})",
                self.b, self.w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Output with every entry outside the target pattern set to zero.
    pub band: Matrix,
    pub flops: FlopSnapshot,
    pub form: SvdForm,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// `round(4 (m n^2 - n^3 / 3))` with `m >= n` (arguments are swapped otherwise).
pub fn svd_nominal_flops(m: u64, n: u64) -> u64 {
    let (m, n) = (m.max(n) as u128, m.min(n) as u128);
    let x = 12 * m * n * n - 4 * n * n * n;
    ((x + 1) / 3) as u64
}

/// Panel sizes at step `k` of the triangular-band reduction: `(bl, br)` are
/// the QR panel width and the LQ panel height.
pub fn tri_band_widths(m: usize, n: usize, w: usize, b: usize, k: usize) -> (usize, usize) {
    let bl = b.min(n.saturating_sub(k)).min(m.saturating_sub(k + 1));
    let jr = n.saturating_sub(k + w);
    let br = if bl == 0 || jr < 2 { 0 } else { bl.min(jr - 1) };
    (bl, br)
}

/// Panel sizes at step `k` of the band reduction: QR panel
/// `A[k+w:m, k:k+bl]` and LQ panel `A[k:k+br, k+w:n]`.
pub fn band_widths(m: usize, n: usize, w: usize, b: usize, k: usize) -> (usize, usize) {
    let bl = b.min(n.saturating_sub(k)).min(m.saturating_sub(k + w + 1));
    let br = b.min(m.saturating_sub(k)).min(n.saturating_sub(k + w + 1));
    (bl, br)
}

#[derive(Debug, Clone, Copy)]
struct BandGeom {
    m: usize,
    n: usize,
    w: usize,
    b: usize,
    k: usize,
    bl: usize,
    br: usize,
    /// Next step's panel sizes.
    bl2: usize,
    br2: usize,
}

impl BandGeom {
    fn at(m: usize, n: usize, w: usize, b: usize, k: usize) -> Self {
        let (bl, br) = band_widths(m, n, w, b, k);
        let (bl2, br2) = band_widths(m, n, w, b, k + b);
        BandGeom {
            m,
            n,
            w,
            b,
            k,
            bl,
            br,
            bl2,
            br2,
        }
    }

    /// First row (column) of D.
    fn d0(&self) -> (usize, usize) {
        ((self.k + self.w).min(self.m), (self.k + self.w).min(self.n))
    }

    fn qr_panel(&self) -> Region {
        Region::a(self.d0().0..self.m, self.k..self.k + self.bl)
    }

    fn lq_panel(&self) -> Region {
        Region::a(self.k..self.k + self.br, self.d0().1..self.n)
    }

    /// B1 columns `[k+bl, k+w)` clipped to n.
    fn b1_cols(&self) -> Range<usize> {
        (self.k + self.bl).min(self.n)..(self.k + self.w).min(self.n)
    }

    /// C1 rows `[k+br, k+w)` clipped to m.
    fn c1_rows(&self) -> Range<usize> {
        (self.k + self.br).min(self.m)..(self.k + self.w).min(self.m)
    }

    fn d_rows(&self) -> Range<usize> {
        self.d0().0..self.m
    }

    fn d_cols(&self) -> Range<usize> {
        self.d0().1..self.n
    }

    fn left_order(&self) -> usize {
        self.m - self.d0().0
    }

    fn right_order(&self) -> usize {
        self.n - self.d0().1
    }

    fn next_qr(&self) -> (Range<usize>, Range<usize>) {
        let k2 = self.k + self.b;
        ((k2 + self.w).min(self.m)..self.m, k2..k2 + self.bl2)
    }

    fn next_lq(&self) -> (Range<usize>, Range<usize>) {
        let k2 = self.k + self.b;
        (k2..k2 + self.br2, (k2 + self.w).min(self.n)..self.n)
    }
}

type Slot = OnceLock<PanelFactors>;

fn get(f: &Slot) -> &PanelFactors {
    f.get().expect("panel factors available")
}

fn qr_task<'a>(
    sm: &'a SharedMat<'a>,
    iter: usize,
    rows: Range<usize>,
    cols: Range<usize>,
    inner_b: usize,
    out: &'a Slot,
) -> Task<'a> {
    let region = Region::a(rows.clone(), cols.clone());
    Task::new(format!("qr@{iter}"), TaskKind::QrPanel, iter, move |ctx| {
        let f = qr_panel(ctx.kern(), ctx.write(sm, rows, cols), inner_b)?;
        out.set(f).expect("panel factorized once");
        Ok(())
    })
    .writes(region)
}

fn lq_task<'a>(
    sm: &'a SharedMat<'a>,
    iter: usize,
    rows: Range<usize>,
    cols: Range<usize>,
    inner_b: usize,
    out: &'a Slot,
) -> Task<'a> {
    let region = Region::a(rows.clone(), cols.clone());
    Task::new(format!("lq@{iter}"), TaskKind::LqPanel, iter, move |ctx| {
        let f = lq_panel(ctx.kern(), ctx.write(sm, rows, cols), inner_b)?;
        out.set(f).expect("panel factorized once");
        Ok(())
    })
    .writes(region)
}

#[allow(clippy::too_many_arguments)]
fn update_task<'a>(
    sm: &'a SharedMat<'a>,
    name: &str,
    kind: TaskKind,
    iter: usize,
    panel: Region,
    rows: Range<usize>,
    cols: Range<usize>,
    fac: &'a Slot,
) -> Task<'a> {
    let region = Region::a(rows.clone(), cols.clone());
    // An empty target touches nothing, not even the panel.
    let panel = if region.is_empty() {
        region.clone()
    } else {
        panel
    };
    Task::new(format!("{name}@{iter}"), kind, iter, move |ctx| {
        let blk = ctx.write(sm, rows, cols);
        if kind == TaskKind::LeftUpdate {
            apply_wy_left(ctx.kern(), blk, get(fac))
        } else {
            apply_wy_right(ctx.kern(), blk, get(fac))
        }
    })
    .reads(panel)
    .writes(region)
}

/// Fused trailing update `D += L Rᵀ` with `L = [X, Y_U]`, `R = [Y_V, Z_L]`.
struct Fused {
    l: Matrix,
    r: Matrix,
}

fn fused_workspace_task<'a>(
    sm: &'a SharedMat<'a>,
    iter: usize,
    g: &BandGeom,
    u: &'a Slot,
    v: &'a Slot,
    out: &'a OnceLock<Fused>,
) -> Task<'a> {
    let (rows, cols) = (g.d_rows(), g.d_cols());
    let d_region = Region::a(rows.clone(), cols.clone());
    let (md, nd, bl, br) = (rows.len(), cols.len(), g.bl, g.br);
    Task::new(
        format!("zx@{iter}"),
        TaskKind::Workspace,
        iter,
        move |ctx| {
            let kern = ctx.kern();
            let d = ctx.read(sm, rows, cols);
            let (fu, fv) = (get(u), get(v));
            let mut l = Matrix::zeros(md, br + bl);
            let mut r = Matrix::zeros(nd, br + bl);
            // Z_L = Dᵀ W_U, stored as the right part of R.
            matmul(
                kern,
                1.0,
                d,
                Op::T,
                fu.w.view(),
                Op::N,
                0.0,
                r.view_mut().sub(0..nd, br..br + bl),
            )?;
            // Z_R = D W_V, then X = Z_R + Y_U (Z_Lᵀ W_V), stored as the left part of L.
            matmul(
                kern,
                1.0,
                d,
                Op::N,
                fv.w.view(),
                Op::N,
                0.0,
                l.view_mut().sub(0..md, 0..br),
            )?;
            let mut s = Matrix::zeros(bl, br);
            matmul(
                kern,
                1.0,
                r.view().sub(0..nd, br..br + bl),
                Op::T,
                fv.w.view(),
                Op::N,
                0.0,
                s.view_mut(),
            )?;
            matmul(
                kern,
                1.0,
                fu.y.view(),
                Op::N,
                s.view(),
                Op::N,
                1.0,
                l.view_mut().sub(0..md, 0..br),
            )?;
            l.view_mut().sub(0..md, br..br + bl).copy_from(fu.y.view());
            r.view_mut().sub(0..nd, 0..br).copy_from(fv.y.view());
            out.set(Fused { l, r }).ok().expect("workspace built once");
            Ok(())
        },
    )
    .reads(g.qr_panel())
    .reads(g.lq_panel())
    .reads(d_region)
    .writes(Region::new(MAT_WORK, 0..md + nd, 0..bl + br))
}

/// Applies the fused update to the part `rows x cols` of D.
fn fused_apply_task<'a>(
    sm: &'a SharedMat<'a>,
    name: &str,
    iter: usize,
    g: &BandGeom,
    rows: Range<usize>,
    cols: Range<usize>,
    fused: &'a OnceLock<Fused>,
) -> Task<'a> {
    let (r0, c0) = g.d0();
    let region = Region::a(rows.clone(), cols.clone());
    let inner = g.bl + g.br;
    let work = Region::new(MAT_WORK, 0..g.left_order() + g.right_order(), 0..inner);
    Task::new(
        format!("{name}@{iter}"),
        TaskKind::FusedUpdate,
        iter,
        move |ctx| {
            let blk = ctx.write(sm, rows.clone(), cols.clone());
            let f = fused.get().expect("fused workspace available");
            let l = f.l.view().sub(rows.start - r0..rows.end - r0, 0..inner);
            let r = f.r.view().sub(cols.start - c0..cols.end - c0, 0..inner);
            matmul(ctx.kern(), 1.0, l, Op::N, r, Op::T, 1.0, blk)
        },
    )
    .reads(work)
    .writes(region)
}

/// Reduction state, advanced one step at a time.
#[derive(Debug)]
pub struct SvdState {
    a: Matrix,
    cfg: SvdConfig,
    k: usize,
    iter: usize,
    /// Factors of the current step's panels when they were factorized ahead.
    ahead: Option<(PanelFactors, PanelFactors)>,
    warnings: Vec<String>,
}

impl SvdState {
    /// Works on `a` as given; callers handle `m < n` for the band form.
    pub fn new(a: &Matrix, cfg: &SvdConfig) -> Result<Self> {
        cfg.validate()?;
        if a.rows() < a.cols() {
            return Err(Error::Dimension(format!(
                "reduction needs m >= n, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let mut warnings = Vec::new();
        if cfg.variant == SvdVariant::V2 && 2 * cfg.b <= cfg.w {
            warnings.push(format!(
                "V2 with 2b <= w (b = {}, w = {}): the next panels fit in B1 and C1, V1 is the intended variant",
                cfg.b, cfg.w
            ));
        }
        Ok(SvdState {
            a: a.clone(),
            cfg: cfg.clone(),
            k: 0,
            iter: 0,
            ahead: None,
            warnings,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    fn dims(&self) -> (usize, usize) {
        (self.a.rows(), self.a.cols())
    }

    pub fn is_done(&self) -> bool {
        let (m, n) = self.dims();
        match self.cfg.form {
            SvdForm::TriangularBand => tri_band_widths(m, n, self.cfg.w, self.cfg.b, self.k).0 == 0,
            SvdForm::Band => band_widths(m, n, self.cfg.w, self.cfg.b, self.k) == (0, 0),
        }
    }

    /// Runs one step. Returns `false` once nothing is left to reduce.
    pub fn step(&mut self, rt: &Runtime) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        match (self.cfg.form, self.cfg.variant) {
            (SvdForm::TriangularBand, _) => self.step_tri(rt)?,
            (SvdForm::Band, SvdVariant::Reference) => self.step_band_sequential(rt, false)?,
            (SvdForm::Band, SvdVariant::Simultaneous) => self.step_band_sequential(rt, true)?,
            (SvdForm::Band, SvdVariant::V1) => self.step_v1(rt)?,
            (SvdForm::Band, SvdVariant::V2) => self.step_v2(rt)?,
        }
        self.iter += 1;
        Ok(true)
    }

    fn step_tri(&mut self, rt: &Runtime) -> Result<()> {
        let (m, n) = self.dims();
        let (w, k, iter, ib) = (self.cfg.w, self.k, self.iter, self.cfg.inner_b);
        let (bl, br) = tri_band_widths(m, n, w, self.cfg.b, k);
        let (u, v) = (Slot::new(), Slot::new());
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let qr = Region::a(k..m, k..k + bl);
            let mut tasks = vec![
                qr_task(&sm, iter, k..m, k..k + bl, ib, &u),
                update_task(
                    &sm,
                    "left",
                    TaskKind::LeftUpdate,
                    iter,
                    qr,
                    k..m,
                    k + bl..n,
                    &u,
                ),
            ];
            if br > 0 {
                let lq = Region::a(k..k + br, k + w..n);
                tasks.push(lq_task(&sm, iter, k..k + br, k + w..n, ib, &v));
                tasks.push(update_task(
                    &sm,
                    "right",
                    TaskKind::RightUpdate,
                    iter,
                    lq,
                    k + br..m,
                    k + w..n,
                    &v,
                ));
            }
            rt.run_sequence(&format!("triband@{iter}"), tasks)?;
        }
        self.k += bl;
        Ok(())
    }

    fn geom(&self) -> BandGeom {
        let (m, n) = self.dims();
        BandGeom::at(m, n, self.cfg.w, self.cfg.b, self.k)
    }

    /// Pre-sets absent factors to the identity so every task can run.
    fn slots(g: &BandGeom) -> (Slot, Slot) {
        let (u, v) = (Slot::new(), Slot::new());
        if g.bl == 0 {
            let _ = u.set(PanelFactors::identity(g.left_order()));
        }
        if g.br == 0 {
            let _ = v.set(PanelFactors::identity(g.right_order()));
        }
        (u, v)
    }

    fn panel_tasks<'a>(
        sm: &'a SharedMat<'a>,
        g: &BandGeom,
        iter: usize,
        ib: usize,
        u: &'a Slot,
        v: &'a Slot,
    ) -> Vec<Task<'a>> {
        let mut t = Vec::new();
        if g.bl > 0 {
            let p = g.qr_panel();
            t.push(qr_task(sm, iter, p.rows, p.cols, ib, u));
        }
        if g.br > 0 {
            let p = g.lq_panel();
            t.push(lq_task(sm, iter, p.rows, p.cols, ib, v));
        }
        t
    }

    fn step_band_sequential(&mut self, rt: &Runtime, fused: bool) -> Result<()> {
        let g = self.geom();
        let (iter, ib) = (self.iter, self.cfg.inner_b);
        let (u, v) = Self::slots(&g);
        let ws = OnceLock::new();
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let (qp, lp) = (g.qr_panel(), g.lq_panel());
            let mut tasks = Vec::new();
            let left = |name, rows, cols| {
                update_task(
                    &sm,
                    name,
                    TaskKind::LeftUpdate,
                    iter,
                    qp.clone(),
                    rows,
                    cols,
                    &u,
                )
            };
            let right = |name, rows, cols| {
                update_task(
                    &sm,
                    name,
                    TaskKind::RightUpdate,
                    iter,
                    lp.clone(),
                    rows,
                    cols,
                    &v,
                )
            };
            if g.bl > 0 {
                tasks.push(qr_task(&sm, iter, qp.rows.clone(), qp.cols.clone(), ib, &u));
                tasks.push(left("b1", g.d_rows(), g.b1_cols()));
                if !fused {
                    tasks.push(left("dl", g.d_rows(), g.d_cols()));
                }
            }
            if g.br > 0 {
                tasks.push(lq_task(&sm, iter, lp.rows.clone(), lp.cols.clone(), ib, &v));
                tasks.push(right("c1", g.c1_rows(), g.d_cols()));
                if !fused {
                    tasks.push(right("dr", g.d_rows(), g.d_cols()));
                }
            }
            if fused {
                tasks.push(fused_workspace_task(&sm, iter, &g, &u, &v, &ws));
                tasks.push(fused_apply_task(
                    &sm,
                    "d",
                    iter,
                    &g,
                    g.d_rows(),
                    g.d_cols(),
                    &ws,
                ));
            }
            let label = if fused { "band-sim" } else { "band-ref" };
            rt.run_sequence(&format!("{label}@{iter}"), tasks)?;
        }
        self.k += g.b;
        Ok(())
    }

    /// Factors of the current step, computing them first when not done ahead.
    fn prologue(&mut self, rt: &Runtime, g: &BandGeom) -> Result<(Slot, Slot)> {
        if let Some((u, v)) = self.ahead.take() {
            return Ok((OnceLock::from(u), OnceLock::from(v)));
        }
        let (u, v) = Self::slots(g);
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let tasks = Self::panel_tasks(&sm, g, self.iter, self.cfg.inner_b, &u, &v);
            rt.run_sequence("band-prologue", tasks)?;
        }
        Ok((u, v))
    }

    fn next_slots(g: &BandGeom) -> (Slot, Slot) {
        let next = BandGeom::at(g.m, g.n, g.w, g.b, g.k + g.b);
        Self::slots(&next)
    }

    fn step_v1(&mut self, rt: &Runtime) -> Result<()> {
        let g = self.geom();
        let (u, v) = self.prologue(rt, &g)?;
        let (iter, ib) = (self.iter, self.cfg.inner_b);
        let (u2, v2) = Self::next_slots(&g);
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let (qp, lp) = (g.qr_panel(), g.lq_panel());
            let left = |name, rows, cols| {
                update_task(
                    &sm,
                    name,
                    TaskKind::LeftUpdate,
                    iter,
                    qp.clone(),
                    rows,
                    cols,
                    &u,
                )
            };
            let right = |name, rows, cols| {
                update_task(
                    &sm,
                    name,
                    TaskKind::RightUpdate,
                    iter,
                    lp.clone(),
                    rows,
                    cols,
                    &v,
                )
            };
            let b1 = g.b1_cols();
            let b1_split = (b1.start + g.bl2).min(b1.end);
            let c1 = g.c1_rows();
            let c1_split = (c1.start + g.br2).min(c1.end);
            let mut plan = PhasePlan::new(format!("band-v1@{iter}"));
            if g.bl2 > 0 {
                let (r, c) = g.next_qr();
                plan = plan
                    .seq(left("b1l", g.d_rows(), b1.start..b1_split))
                    .seq(qr_task(&sm, iter + 1, r, c, ib, &u2));
            }
            if g.br2 > 0 {
                let (r, c) = g.next_lq();
                plan = plan
                    .seq(right("c1t", c1.start..c1_split, g.d_cols()))
                    .seq(lq_task(&sm, iter + 1, r, c, ib, &v2));
            }
            if g.bl > 0 {
                plan = plan.par(left("b1r", g.d_rows(), b1_split..b1.end));
            }
            if g.br > 0 {
                plan = plan.par(right("c1b", c1_split..c1.end, g.d_cols()));
            }
            if g.bl > 0 {
                plan = plan.par(left("dl", g.d_rows(), g.d_cols()));
            }
            if g.br > 0 {
                plan = plan.par(right("dr", g.d_rows(), g.d_cols()));
            }
            rt.run_phase(plan)?;
        }
        self.finish_step(&g, u2, v2);
        Ok(())
    }

    fn step_v2(&mut self, rt: &Runtime) -> Result<()> {
        let g = self.geom();
        let (u, v) = self.prologue(rt, &g)?;
        let (iter, ib) = (self.iter, self.cfg.inner_b);
        let (u2, v2) = Self::next_slots(&g);
        let ws = OnceLock::new();
        // Columns (rows) of D that the next QR (LQ) panel reaches into.
        let lc = if g.bl2 > 0 {
            (g.bl + g.bl2).saturating_sub(g.w)
        } else {
            0
        };
        let lr = if g.br2 > 0 {
            (g.br + g.br2).saturating_sub(g.w)
        } else {
            0
        };
        {
            let sm = SharedMat::new(MAT_A, &mut self.a);
            let (qp, lp) = (g.qr_panel(), g.lq_panel());
            let mut first_seq = Vec::new();
            if g.bl > 0 {
                first_seq.push(update_task(
                    &sm,
                    "b1",
                    TaskKind::LeftUpdate,
                    iter,
                    qp,
                    g.d_rows(),
                    g.b1_cols(),
                    &u,
                ));
            }
            if g.br > 0 {
                first_seq.push(update_task(
                    &sm,
                    "c1",
                    TaskKind::RightUpdate,
                    iter,
                    lp,
                    g.c1_rows(),
                    g.d_cols(),
                    &v,
                ));
            }
            let zx = fused_workspace_task(&sm, iter, &g, &u, &v, &ws);
            match self.cfg.v2_mapping {
                SvdV2Mapping::B1C1OnTs => {
                    let mut plan = PhasePlan::new(format!("band-v2a@{iter}")).par(zx);
                    plan.seq = first_seq;
                    rt.run_phase(plan)?;
                }
                SvdV2Mapping::B1C1OnAll => {
                    first_seq.push(zx);
                    rt.run_sequence(&format!("band-v2a@{iter}"), first_seq)?;
                }
            }
            let (r0, c0) = g.d0();
            let (rs, cs) = (r0 + lr, c0 + lc);
            let apply = |name, rows, cols| fused_apply_task(&sm, name, iter, &g, rows, cols, &ws);
            let mut plan = PhasePlan::new(format!("band-v2b@{iter}"));
            if lr > 0 && lc > 0 {
                plan = plan.seq(apply("d11", r0..rs, c0..cs));
            }
            if lr > 0 {
                plan = plan.seq(apply("d12", r0..rs, cs..g.n));
            }
            if lc > 0 {
                plan = plan.seq(apply("d21", rs..g.m, c0..cs));
            }
            if g.bl2 > 0 {
                let (r, c) = g.next_qr();
                plan = plan.seq(qr_task(&sm, iter + 1, r, c, ib, &u2));
            }
            if g.br2 > 0 {
                let (r, c) = g.next_lq();
                plan = plan.seq(lq_task(&sm, iter + 1, r, c, ib, &v2));
            }
            plan = plan.par(apply("d22", rs..g.m, cs..g.n));
            rt.run_phase(plan)?;
        }
        self.finish_step(&g, u2, v2);
        Ok(())
    }

    fn finish_step(&mut self, g: &BandGeom, u2: Slot, v2: Slot) {
        self.k += g.b;
        self.ahead = match (u2.into_inner(), v2.into_inner()) {
            (Some(u), Some(v)) => Some((u, v)),
            _ => None,
        };
    }

    /// Zeroes every entry outside the target pattern.
    pub fn finish(self) -> (Matrix, Vec<String>) {
        let mut band = self.a;
        let w = self.cfg.w;
        let tri = self.cfg.form == SvdForm::TriangularBand;
        for j in 0..band.cols() {
            for i in 0..band.rows() {
                let outside = if tri {
                    i > j || j > i + w
                } else {
                    i.abs_diff(j) > w
                };
                if outside {
                    band[(i, j)] = 0.0;
                }
            }
        }
        (band, self.warnings)
    }
}

/// Reduces `a` per `cfg`, recording into `rt`. Band-form inputs with `m < n`
/// are transposed, reduced and transposed back.
pub fn reduce_with(a: &Matrix, cfg: &SvdConfig, rt: &Runtime) -> Result<SvdResult> {
    cfg.validate()?;
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Dimension(format!(
            "reduction needs a non-empty matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let transposed = a.rows() < a.cols() && cfg.form == SvdForm::Band;
    let input = if transposed { a.transpose() } else { a.clone() };
    let mut st = SvdState::new(&input, cfg)?;
    let before = rt.snapshot_flops();
    while st.step(rt)? {}
    let flops = rt.snapshot_flops().since(&before);
    let iterations = st.iterations();
    let (band, warnings) = st.finish();
    Ok(SvdResult {
        band: if transposed { band.transpose() } else { band },
        flops,
        form: cfg.form,
        iterations,
        warnings,
    })
}

/// Upper triangular-band reduction (sequential by construction).
pub fn reduce_tri_band(a: &Matrix, w: usize, b: usize) -> Result<SvdResult> {
    reduce_with(a, &SvdConfig::tri_band(w, b), &Runtime::serial())
}

/// Band-form reduction with the configured variant.
pub fn reduce_band_svd(a: &Matrix, cfg: &SvdConfig, groups: ExecGroups) -> Result<SvdResult> {
    reduce_with(a, cfg, &Runtime::new(groups))
}

/// Like [`reduce_band_svd`], also returning the event trace.
pub fn reduce_traced(
    a: &Matrix,
    cfg: &SvdConfig,
    groups: ExecGroups,
) -> Result<(SvdResult, EventTrace)> {
    let rt = Runtime::new(groups);
    let res = reduce_with(a, cfg, &rt)?;
    Ok((res, rt.take_trace()))
}
