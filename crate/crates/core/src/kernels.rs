//! Level-3 kernels with a fixed per-entry summation order.
//!
//! Every output entry is produced by one sequential sum over the inner
//! dimension, so results do not depend on the worker count or on how the
//! output is tiled. Parallelism is applied only across disjoint output tiles.

use crate::error::{dim_err, Result};
use crate::flops::{FlopClass, FlopCounter};
use crate::matrix::{MatMut, MatRef};

/// Worker budget and flop sink handed to every kernel call.
#[derive(Clone, Copy)]
pub struct Ctx<'a> {
    pub workers: usize,
    pub flops: &'a FlopCounter,
}

impl<'a> Ctx<'a> {
    pub fn new(workers: usize, flops: &'a FlopCounter) -> Self {
        Ctx {
            workers: workers.max(1),
            flops,
        }
    }

    pub fn serial(self) -> Self {
        Ctx { workers: 1, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

fn op_dims(a: MatRef<'_>, op: Op) -> (usize, usize) {
    match op {
        Op::N => (a.rows(), a.cols()),
        Op::T => (a.cols(), a.rows()),
    }
}

/// Below this many flops a kernel runs on the calling thread.
const PAR_MIN_FLOPS: u64 = 1 << 20;
const MIN_TILE_ROWS: usize = 64;

struct Tile<'a> {
    r0: usize,
    c0: usize,
    view: MatMut<'a>,
}

/// Splits `c` into disjoint tiles sized for `workers` threads.
fn make_tiles(c: MatMut<'_>, workers: usize) -> Vec<Tile<'_>> {
    let (m, n) = (c.rows(), c.cols());
    let target = workers * 2;
    let col_chunks = n.clamp(1, target);
    let row_chunks = if col_chunks >= target {
        1
    } else {
        (target / col_chunks).clamp(1, m.div_ceil(MIN_TILE_ROWS).max(1))
    };
    let cw = n.div_ceil(col_chunks).max(1);
    let rh = m.div_ceil(row_chunks).max(1);
    let mut tiles = Vec::new();
    let mut rest = c;
    let mut c0 = 0;
    while c0 < n {
        let w = cw.min(n - c0);
        let (strip, tail) = rest.split_cols(w);
        rest = tail;
        let mut srest = strip;
        let mut r0 = 0;
        while r0 < m {
            let h = rh.min(m - r0);
            let (t, tail) = srest.split_rows(h);
            srest = tail;
            tiles.push(Tile { r0, c0, view: t });
            r0 += h;
        }
        c0 += w;
    }
    tiles
}

/// Runs `f` over tiles of `c`, on up to `workers` scoped threads.
fn for_tiles<F>(c: MatMut<'_>, workers: usize, flops: u64, f: F)
where
    F: Fn(usize, usize, MatMut<'_>) + Sync,
{
    if c.rows() == 0 || c.cols() == 0 {
        return;
    }
    if workers <= 1 || flops < PAR_MIN_FLOPS {
        f(0, 0, c);
        return;
    }
    let tiles = make_tiles(c, workers);
    let nthreads = workers.min(tiles.len());
    let mut buckets: Vec<Vec<Tile<'_>>> = (0..nthreads).map(|_| Vec::new()).collect();
    for (i, t) in tiles.into_iter().enumerate() {
        buckets[i % nthreads].push(t);
    }
    std::thread::scope(|s| {
        let f = &f;
        let mut iter = buckets.into_iter();
        let mine = iter.next().unwrap_or_default();
        let handles: Vec<_> = iter
            .map(|bucket| {
                s.spawn(move || {
                    for t in bucket {
                        f(t.r0, t.c0, t.view);
                    }
                })
            })
            .collect();
        for t in mine {
            f(t.r0, t.c0, t.view);
        }
        for h in handles {
            if let Err(p) = h.join() {
                std::panic::resume_unwind(p);
            }
        }
    });
}

#[inline]
fn finish(acc: f64, alpha: f64, beta: f64, old: f64) -> f64 {
    if beta == 0.0 {
        alpha * acc
    } else {
        alpha * acc + beta * old
    }
}

/// `C := alpha * op(A) * op(B) + beta * C`.
///
/// Entry `(i, j)` is `alpha * s + beta * c_ij` (or `alpha * s` when
/// `beta == 0`, without reading C) where `s` sums `op(A)[i,p] * op(B)[p,j]`
/// sequentially for `p = 0, 1, ...` starting from `0.0`.
#[allow(clippy::too_many_arguments)]
pub fn matmul(
    ctx: Ctx<'_>,
    alpha: f64,
    a: MatRef<'_>,
    op_a: Op,
    b: MatRef<'_>,
    op_b: Op,
    beta: f64,
    c: MatMut<'_>,
) -> Result<()> {
    let (m, k) = op_dims(a, op_a);
    let (kb, n) = op_dims(b, op_b);
    if k != kb || c.rows() != m || c.cols() != n {
        return dim_err(format!(
            "matmul: op(A) {m}x{k}, op(B) {kb}x{n}, C {}x{}",
            c.rows(),
            c.cols()
        ));
    }
    let flops = 2 * (m as u64) * (n as u64) * (k as u64);
    ctx.flops.add(FlopClass::Matmul, flops);
    if alpha == 0.0 || k == 0 {
        let mut c = c;
        if beta != 1.0 {
            for j in 0..n {
                for x in c.col_mut(j) {
                    *x = if beta == 0.0 { 0.0 } else { beta * *x };
                }
            }
        }
        return Ok(());
    }
    for_tiles(c, ctx.workers, flops, |r0, c0, mut ct| {
        let rows = ct.rows();
        let mut acc = vec![0.0; rows];
        let mut bcol = vec![0.0; k];
        for jj in 0..ct.cols() {
            let j = c0 + jj;
            let bj: &[f64] = match op_b {
                Op::N => b.col(j),
                Op::T => {
                    for (p, x) in bcol.iter_mut().enumerate() {
                        *x = b.get(j, p);
                    }
                    &bcol
                }
            };
            match op_a {
                Op::N => {
                    acc.fill(0.0);
                    for (p, &bp) in bj.iter().enumerate() {
                        let ap = &a.col(p)[r0..r0 + rows];
                        for (x, &av) in acc.iter_mut().zip(ap) {
                            *x += av * bp;
                        }
                    }
                    let cc = ct.col_mut(jj);
                    for (x, &s) in cc.iter_mut().zip(&acc) {
                        *x = finish(s, alpha, beta, *x);
                    }
                }
                Op::T => {
                    let cc = ct.col_mut(jj);
                    for (ii, x) in cc.iter_mut().enumerate() {
                        let ai = a.col(r0 + ii);
                        let mut s = 0.0;
                        for (&av, &bv) in ai.iter().zip(bj) {
                            s += av * bv;
                        }
                        *x = finish(s, alpha, beta, *x);
                    }
                }
            }
        }
    });
    Ok(())
}

/// `X := S * W` where S is symmetric and only its lower triangle (of `a`) is read.
///
/// Entry `(i, c)` is `sum_{p<=i} a[i,p] w[p,c]` (sequential in `p`) plus
/// `sum_{p>i} a[p,i] w[p,c]` (sequential in `p`).
pub fn symm_lower(ctx: Ctx<'_>, a: MatRef<'_>, w: MatRef<'_>, x: MatMut<'_>) -> Result<()> {
    let n = a.rows();
    if a.cols() != n || w.rows() != n || x.rows() != n || x.cols() != w.cols() {
        return dim_err(format!(
            "symm_lower: S {}x{}, W {}x{}, X {}x{}",
            a.rows(),
            a.cols(),
            w.rows(),
            w.cols(),
            x.rows(),
            x.cols()
        ));
    }
    let flops = 2 * (n as u64) * (n as u64) * (w.cols() as u64);
    ctx.flops.add(FlopClass::Symmetric, flops);
    for_tiles(x, ctx.workers, flops, |r0, c0, mut xt| {
        let rows = xt.rows();
        let r1 = r0 + rows;
        let mut acc = vec![0.0; rows];
        for cc in 0..xt.cols() {
            let wc = w.col(c0 + cc);
            acc.fill(0.0);
            for (p, &wp) in wc.iter().enumerate().take(r1) {
                let lo = p.max(r0);
                let ap = &a.col(p)[lo..r1];
                for (x, &av) in acc[lo - r0..].iter_mut().zip(ap) {
                    *x += av * wp;
                }
            }
            let out = xt.col_mut(cc);
            for (ii, o) in out.iter_mut().enumerate() {
                let i = r0 + ii;
                let ai = &a.col(i)[i + 1..];
                let mut s = 0.0;
                for (&av, &wv) in ai.iter().zip(&wc[i + 1..]) {
                    s += av * wv;
                }
                *o = acc[ii] + s;
            }
        }
    });
    Ok(())
}

/// Lower-triangle rank-2k update `C := C + X Y^T + Y X^T` on a column slice.
///
/// `c` holds the full row range of the triangle; view column `jj` is
/// triangle column `col_offset + jj`, and only rows `i >= col_offset + jj`
/// are written. For each entry the sum runs over `p` sequentially, adding
/// `x[i,p] y[j,p]` then `y[i,p] x[j,p]`, starting from `0.0`.
pub fn syr2k_lower(
    ctx: Ctx<'_>,
    x: MatRef<'_>,
    y: MatRef<'_>,
    c: MatMut<'_>,
    col_offset: usize,
) -> Result<()> {
    let n = c.rows();
    let k = x.cols();
    if x.rows() != n || y.rows() != n || y.cols() != k || col_offset + c.cols() > n {
        return dim_err(format!(
            "syr2k_lower: C {}x{} at column {col_offset}, X {}x{}, Y {}x{}",
            c.rows(),
            c.cols(),
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        ));
    }
    let mut entries = 0u64;
    for jj in 0..c.cols() {
        entries += (n - (col_offset + jj)) as u64;
    }
    let flops = 4 * entries * k as u64;
    ctx.flops.add(FlopClass::Symmetric, flops);
    if k == 0 {
        return Ok(());
    }
    // Column tiles only: each column's row range depends on its position.
    let workers = ctx.workers;
    let ncols = c.cols();
    let run = |c0: usize, mut ct: MatMut<'_>| {
        let mut acc = vec![0.0; n];
        for jj in 0..ct.cols() {
            let j = col_offset + c0 + jj;
            let acc = &mut acc[j..];
            acc.fill(0.0);
            for p in 0..k {
                let (xj, yj) = (x.get(j, p), y.get(j, p));
                let xp = &x.col(p)[j..];
                let yp = &y.col(p)[j..];
                for ((a, &xv), &yv) in acc.iter_mut().zip(xp).zip(yp) {
                    *a += xv * yj;
                    *a += yv * xj;
                }
            }
            let cc = &mut ct.col_mut(jj)[j..];
            for (o, &a) in cc.iter_mut().zip(acc.iter()) {
                *o += a;
            }
        }
    };
    if workers <= 1 || flops < PAR_MIN_FLOPS || ncols < 2 {
        run(0, c);
        return Ok(());
    }
    // Balance by triangle area: cut where the cumulative entry count crosses
    // equal shares.
    let chunks = (workers * 2).min(ncols);
    let share = entries.div_ceil(chunks as u64);
    let mut cuts = vec![0usize];
    let mut accum = 0u64;
    for jj in 0..ncols {
        accum += (n - (col_offset + jj)) as u64;
        if accum >= share * cuts.len() as u64 && jj + 1 < ncols {
            cuts.push(jj + 1);
        }
    }
    cuts.push(ncols);
    cuts.dedup();
    let mut pieces = Vec::new();
    let mut rest = c;
    for win in cuts.windows(2) {
        let (p, t) = rest.split_cols(win[1] - win[0]);
        pieces.push((win[0], p));
        rest = t;
    }
    let nthreads = workers.min(pieces.len());
    let mut buckets: Vec<Vec<(usize, MatMut<'_>)>> = (0..nthreads).map(|_| Vec::new()).collect();
    for (i, p) in pieces.into_iter().enumerate() {
        buckets[i % nthreads].push(p);
    }
    std::thread::scope(|s| {
        let run = &run;
        let handles: Vec<_> = buckets
            .into_iter()
            .map(|bucket| {
                s.spawn(move || {
                    for (c0, v) in bucket {
                        run(c0, v);
                    }
                })
            })
            .collect();
        for h in handles {
            if let Err(p) = h.join() {
                std::panic::resume_unwind(p);
            }
        }
    });
    Ok(())
}
