//! Householder reflectors, blocked left-looking QR/LQ panels and the
//! compact WY form `Q = I + W Y^T` with `W = Y T`.

use crate::error::{dim_err, Result};
use crate::flops::FlopClass;
use crate::kernels::{matmul, symm_lower, syr2k_lower, Ctx, Op};
use crate::matrix::{MatMut, MatRef, Matrix};

/// Default inner block size of the panel factorization.
pub const DEFAULT_INNER_BLOCK: usize = 16;

/// Output of a QR or LQ panel factorization.
///
/// For QR the orthogonal factor is `Q = I + w y^T` (j x j); for LQ the same
/// expression gives `V`, acting on the panel's columns.
#[derive(Debug, Clone)]
pub struct PanelFactors {
    /// Unit lower-trapezoidal reflector vectors, j x b.
    pub y: Matrix,
    /// Upper triangular b x b factor.
    pub t: Matrix,
    /// `y * t`, j x b.
    pub w: Matrix,
    /// R (upper, QR) or L (lower, LQ), b x b.
    pub r_or_l: Matrix,
    pub tau: Vec<f64>,
}

impl PanelFactors {
    /// Zero reflectors of length `order`: the identity transform.
    pub fn identity(order: usize) -> Self {
        PanelFactors {
            y: Matrix::zeros(order, 0),
            t: Matrix::zeros(0, 0),
            w: Matrix::zeros(order, 0),
            r_or_l: Matrix::zeros(0, 0),
            tau: Vec::new(),
        }
    }

    /// Length of the reflectors (rows of Q).
    pub fn order(&self) -> usize {
        self.y.rows()
    }

    pub fn width(&self) -> usize {
        self.y.cols()
    }

    /// Explicit `I + W Y^T`.
    pub fn explicit_q(&self) -> Matrix {
        let j = self.order();
        Matrix::from_fn(j, j, |r, c| {
            let mut s = if r == c { 1.0 } else { 0.0 };
            for p in 0..self.width() {
                s += self.w[(r, p)] * self.y[(c, p)];
            }
            s
        })
    }
}

fn scaled_norm(x: &[f64]) -> f64 {
    let big = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if big == 0.0 || !big.is_finite() {
        return big;
    }
    let s: f64 = x.iter().map(|v| (v / big) * (v / big)).sum();
    big * s.sqrt()
}

/// In-place reflector: on return `x[0] = beta`, `x[1..]` holds `v[1..]`.
fn house_in_place(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail = scaled_norm(&x[1..]);
    if alpha == 0.0 && tail == 0.0 {
        return (0.0, 0.0);
    }
    let norm = alpha.hypot(tail);
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (tau, beta)
}

/// Householder vector for `x`: `(I - tau v v^T) x = beta e_1`, `v[0] = 1`,
/// `beta = -sign(x_1) ||x||` with `x_1 = 0` taken as positive.
/// The zero vector yields `tau = 0`, `beta = 0`.
pub fn house_gen(x: &[f64]) -> (Vec<f64>, f64, f64) {
    assert!(!x.is_empty(), "house_gen needs a non-empty vector");
    let mut v = x.to_vec();
    let (tau, beta) = house_in_place(&mut v);
    if tau == 0.0 && beta == 0.0 {
        v.iter_mut().for_each(|e| *e = 0.0);
    }
    v[0] = 1.0;
    (v, tau, beta)
}

/// Blocked left-looking QR of a j x b panel (j >= b >= 1).
///
/// On return the top b x b of `p` holds R and the strictly lower part holds
/// the reflector tails; `(I + W Y^T) [R; 0]` reproduces the input.
pub fn qr_panel(ctx: Ctx<'_>, mut p: MatMut<'_>, inner_b: usize) -> Result<PanelFactors> {
    let (j, b) = (p.rows(), p.cols());
    if b == 0 || j < b || inner_b == 0 {
        return dim_err(format!("qr_panel: panel {j}x{b}, inner block {inner_b}"));
    }
    let mut y = Matrix::zeros(j, b);
    let mut t = Matrix::zeros(b, b);
    let mut tau = vec![0.0; b];
    let mut c0 = 0;
    while c0 < b {
        let c1 = (c0 + inner_b).min(b);
        let nb = c1 - c0;
        if c0 > 0 {
            // Bring the block up to date with the reflectors found so far:
            // block += Y0 T0^T Y0^T block.
            let y0 = y.view().sub(0..j, 0..c0);
            let t0 = t.view().sub(0..c0, 0..c0);
            let blk = p.rb().sub(0..j, c0..c1);
            let mut tmp1 = Matrix::zeros(c0, nb);
            matmul(
                ctx,
                1.0,
                y0,
                Op::T,
                blk.as_ref(),
                Op::N,
                0.0,
                tmp1.view_mut(),
            )?;
            let mut tmp2 = Matrix::zeros(c0, nb);
            matmul(
                ctx,
                1.0,
                t0,
                Op::T,
                tmp1.view(),
                Op::N,
                0.0,
                tmp2.view_mut(),
            )?;
            matmul(ctx, 1.0, y0, Op::N, tmp2.view(), Op::N, 1.0, blk)?;
        }
        for c in c0..c1 {
            let len = j - c;
            let (tc, _beta) = house_in_place(&mut p.col_mut(c)[c..]);
            tau[c] = tc;
            ctx.flops.add(FlopClass::Panel, 3 * len as u64);
            {
                let pc = &p.col(c)[c..];
                let yc = &mut y.col_mut(c)[c..];
                yc[0] = 1.0;
                if tc != 0.0 {
                    yc[1..].copy_from_slice(&pc[1..]);
                }
            }
            if tc == 0.0 {
                // Degenerate column: keep the stored tail consistent with v = e_1.
                p.col_mut(c)[c + 1..].fill(0.0);
            }
            // Apply H_c to the remaining columns of the inner block.
            for cc in c + 1..c1 {
                let v = &y.col(c)[c..];
                let s: f64 = v.iter().zip(&p.col(cc)[c..]).map(|(a, b)| a * b).sum();
                let f = tc * s;
                for (x, &vi) in p.col_mut(cc)[c..].iter_mut().zip(v) {
                    *x -= f * vi;
                }
            }
            ctx.flops
                .add(FlopClass::Panel, 4 * (len * (c1 - c - 1)) as u64);
            // T(0:c, c) = -tau T(0:c, 0:c) (Y(:, 0:c)^T v); T(c, c) = -tau.
            t[(c, c)] = -tc;
            if c > 0 {
                let v = &y.col(c)[c..];
                let z: Vec<f64> = (0..c)
                    .map(|q| y.col(q)[c..].iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect();
                for r in 0..c {
                    let mut s = 0.0;
                    for (q, zq) in z.iter().enumerate().skip(r) {
                        s += t[(r, q)] * zq;
                    }
                    t[(r, c)] = -tc * s;
                }
                ctx.flops
                    .add(FlopClass::Compact, (2 * c * len + c * (c + 1)) as u64);
            }
        }
        c0 = c1;
    }
    let w = build_w(ctx, y.view(), t.view())?;
    let r_or_l = Matrix::from_fn(b, b, |r, c| if r <= c { p.get(r, c) } else { 0.0 });
    Ok(PanelFactors {
        y,
        t,
        w,
        r_or_l,
        tau,
    })
}

/// LQ of a b x j panel (j >= b): the transpose dual of [`qr_panel`].
///
/// On return the left b x b of `p` holds L and the reflector tails sit to the
/// right of its diagonal; `[L, 0] (I + W Y^T)^T` reproduces the input.
pub fn lq_panel(ctx: Ctx<'_>, mut p: MatMut<'_>, inner_b: usize) -> Result<PanelFactors> {
    let (b, j) = (p.rows(), p.cols());
    let mut pt = Matrix::from_fn(j, b, |r, c| p.get(c, r));
    let mut f = qr_panel(ctx, pt.view_mut(), inner_b)?;
    for c in 0..j {
        for r in 0..b {
            p.set(r, c, pt[(c, r)]);
        }
    }
    f.r_or_l = f.r_or_l.transpose();
    Ok(f)
}

/// `W = Y T`, reading only the lower trapezoid of Y and the upper triangle of T.
pub fn build_w(ctx: Ctx<'_>, y: MatRef<'_>, t: MatRef<'_>) -> Result<Matrix> {
    let (j, b) = (y.rows(), y.cols());
    if t.rows() != b || t.cols() != b {
        return dim_err(format!("build_w: Y {j}x{b}, T {}x{}", t.rows(), t.cols()));
    }
    let mut w = Matrix::zeros(j, b);
    let mut flops = 0u64;
    for c in 0..b {
        let wc = w.col_mut(c);
        for p in 0..=c {
            let tp = t.get(p, c);
            let lo = p.min(j);
            for (x, &yv) in wc[lo..].iter_mut().zip(&y.col(p)[lo..]) {
                *x += yv * tp;
            }
            flops += 2 * (j - lo) as u64;
        }
    }
    ctx.flops.add(FlopClass::Compact, flops);
    Ok(w)
}

/// `A := (I + W Y^T)^T A = A + Y (W^T A)`.
pub fn apply_wy_left(ctx: Ctx<'_>, a: MatMut<'_>, f: &PanelFactors) -> Result<()> {
    if a.rows() != f.order() {
        return dim_err(format!(
            "apply_wy_left: A has {} rows, factors order {}",
            a.rows(),
            f.order()
        ));
    }
    if a.cols() == 0 || f.width() == 0 {
        return Ok(());
    }
    let mut tmp = Matrix::zeros(f.width(), a.cols());
    matmul(
        ctx,
        1.0,
        f.w.view(),
        Op::T,
        a.as_ref(),
        Op::N,
        0.0,
        tmp.view_mut(),
    )?;
    matmul(ctx, 1.0, f.y.view(), Op::N, tmp.view(), Op::N, 1.0, a)
}

/// `A := A (I + W Y^T) = A + (A W) Y^T`.
pub fn apply_wy_right(ctx: Ctx<'_>, a: MatMut<'_>, f: &PanelFactors) -> Result<()> {
    if a.cols() != f.order() {
        return dim_err(format!(
            "apply_wy_right: A has {} columns, factors order {}",
            a.cols(),
            f.order()
        ));
    }
    if a.rows() == 0 || f.width() == 0 {
        return Ok(());
    }
    let mut tmp = Matrix::zeros(a.rows(), f.width());
    matmul(
        ctx,
        1.0,
        a.as_ref(),
        Op::N,
        f.w.view(),
        Op::N,
        0.0,
        tmp.view_mut(),
    )?;
    matmul(ctx, 1.0, tmp.view(), Op::N, f.y.view(), Op::T, 1.0, a)
}

/// `X3 = X1 + Y X2` with `X1 = S W`, `X2 = X1^T W / 2`, S read from its
/// lower triangle.
pub fn sym_update_workspace(ctx: Ctx<'_>, a2: MatRef<'_>, f: &PanelFactors) -> Result<Matrix> {
    let n = a2.rows();
    if a2.cols() != n || n != f.order() {
        return dim_err(format!(
            "two-sided update: A2 {}x{}, factors order {}",
            a2.rows(),
            a2.cols(),
            f.order()
        ));
    }
    let b = f.width();
    let mut x = Matrix::zeros(n, b);
    symm_lower(ctx, a2, f.w.view(), x.view_mut())?;
    let mut x2 = Matrix::zeros(b, b);
    matmul(
        ctx,
        0.5,
        x.view(),
        Op::T,
        f.w.view(),
        Op::N,
        0.0,
        x2.view_mut(),
    )?;
    matmul(
        ctx,
        1.0,
        f.y.view(),
        Op::N,
        x2.view(),
        Op::N,
        1.0,
        x.view_mut(),
    )?;
    Ok(x)
}

/// Applies `A2 += X3 Y^T + Y X3^T` to the lower-triangle columns held by
/// `cols` (view column 0 is triangle column `col_offset`).
pub fn sym_update_apply(
    ctx: Ctx<'_>,
    cols: MatMut<'_>,
    col_offset: usize,
    x3: &Matrix,
    f: &PanelFactors,
) -> Result<()> {
    syr2k_lower(ctx, x3.view(), f.y.view(), cols, col_offset)
}

/// `A2 := (I + W Y^T)^T A2 (I + W Y^T)` on the lower triangle of `a2`.
pub fn sym_two_sided_update(ctx: Ctx<'_>, mut a2: MatMut<'_>, f: &PanelFactors) -> Result<()> {
    let x3 = sym_update_workspace(ctx, a2.as_ref(), f)?;
    sym_update_apply(ctx, a2.rb(), 0, &x3, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flops::FlopCounter;

    const EPS: f64 = f64::EPSILON;

    fn rnd(m: usize, n: usize, seed: u64) -> Matrix {
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        Matrix::from_fn(m, n, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn mul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|p| a[(i, p)] * b[(p, j)]).sum()
        })
    }

    fn orth_err(q: &Matrix) -> f64 {
        mul(&q.transpose(), q)
            .sub_matrix(&Matrix::identity(q.cols()))
            .frobenius()
    }

    fn reflector(v: &[f64], tau: f64) -> Matrix {
        let n = v.len();
        Matrix::from_fn(n, n, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - tau * v[i] * v[j]
        })
    }

    fn reflector_product(f: &PanelFactors) -> Matrix {
        let j = f.order();
        let mut q = Matrix::identity(j);
        for c in 0..f.width() {
            let v: Vec<f64> = (0..j).map(|i| f.y[(i, c)]).collect();
            q = mul(&q, &reflector(&v, f.tau[c]));
        }
        q
    }

    fn upper_r_padded(f: &PanelFactors, j: usize) -> Matrix {
        let b = f.width();
        Matrix::from_fn(j, b, |i, c| if i < b { f.r_or_l[(i, c)] } else { 0.0 })
    }

    #[test]
    fn house_gen_three_four() {
        let (v, tau, beta) = house_gen(&[3.0, 4.0]);
        assert!((beta.abs() - 5.0).abs() < 1e-15);
        assert_eq!(beta, -5.0);
        assert_eq!(v[0], 1.0);
        assert!(tau > 0.0);
    }

    #[test]
    fn house_gen_zero_vector() {
        let (v, tau, beta) = house_gen(&[0.0, 0.0, 0.0]);
        assert_eq!((tau, beta), (0.0, 0.0));
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn house_gen_zero_lead_uses_positive_sign() {
        let (_, _, beta) = house_gen(&[0.0, 2.0]);
        assert_eq!(beta, -2.0);
    }

    #[test]
    fn house_gen_residual_random() {
        let x: Vec<f64> = rnd(5, 1, 42).col(0).to_vec();
        let (v, tau, beta) = house_gen(&x);
        let h = reflector(&v, tau);
        let hx: Vec<f64> = (0..5)
            .map(|i| (0..5).map(|k| h[(i, k)] * x[k]).sum())
            .collect();
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let res: f64 = hx
            .iter()
            .enumerate()
            .map(|(i, &y)| (y - if i == 0 { beta } else { 0.0 }).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res <= 16.0 * EPS * nx, "residual {res}");
        assert!((beta.abs() - nx).abs() <= 4.0 * EPS * nx);
    }

    #[test]
    fn qr_of_triangular_panel() {
        let fc = FlopCounter::new();
        let b = 3;
        let mut p = Matrix::zeros(7, b);
        let r0 = [[2.0, -1.0, 0.5], [0.0, -3.0, 1.5], [0.0, 0.0, 0.25]];
        for i in 0..b {
            for j in 0..b {
                p[(i, j)] = r0[i][j];
            }
        }
        let orig = p.clone();
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        for (i, row) in r0.iter().enumerate().take(b) {
            assert!((f.r_or_l[(i, i)].abs() - row[i].abs()).abs() < 1e-15);
        }
        let rec = mul(&f.explicit_q(), &upper_r_padded(&f, 7));
        let res = rec.sub_matrix(&orig).frobenius();
        assert!(
            res <= 64.0 * b as f64 * EPS * orig.frobenius(),
            "residual {res}"
        );
    }

    #[test]
    fn qr_random_six_by_two_orthogonal() {
        let fc = FlopCounter::new();
        let mut p = rnd(6, 2, 3);
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        assert!(orth_err(&f.explicit_q()) <= 1e-14);
    }

    #[test]
    fn qr_inner_block_does_not_change_factorization() {
        let fc = FlopCounter::new();
        let orig = rnd(8, 3, 4);
        let mut rs = Vec::new();
        for ib in [1, 2, 3] {
            let mut p = orig.clone();
            let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), ib).unwrap();
            let rec = mul(&f.explicit_q(), &upper_r_padded(&f, 8));
            assert!(rec.sub_matrix(&orig).frobenius() <= 1e-13);
            assert!(orth_err(&f.explicit_q()) <= 64.0 * 3.0 * EPS);
            rs.push(f.r_or_l);
        }
        for r in &rs[1..] {
            for i in 0..3 {
                let s = if (r[(i, i)] > 0.0) == (rs[0][(i, i)] > 0.0) {
                    1.0
                } else {
                    -1.0
                };
                for j in i..3 {
                    assert!((r[(i, j)] - s * rs[0][(i, j)]).abs() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn qr_rejects_wide_panel() {
        let fc = FlopCounter::new();
        let mut p = rnd(2, 3, 1);
        assert!(qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).is_err());
    }

    #[test]
    fn lq_matches_transposed_qr() {
        let fc = FlopCounter::new();
        let orig = rnd(3, 9, 5);
        let mut p = orig.clone();
        let f = lq_panel(Ctx::new(1, &fc), p.view_mut(), 2).unwrap();
        let mut pt = orig.transpose();
        let g = qr_panel(Ctx::new(1, &fc), pt.view_mut(), 2).unwrap();
        assert!(f.y.sub_matrix(&g.y).max_abs() <= 1e-13);
        assert!(f.w.sub_matrix(&g.w).max_abs() <= 1e-13);
        assert!(f.r_or_l.sub_matrix(&g.r_or_l.transpose()).max_abs() <= 1e-13);
        assert!(p.sub_matrix(&pt.transpose()).max_abs() <= 1e-13);
    }

    #[test]
    fn lq_of_lower_panel_and_random_orthogonality() {
        let fc = FlopCounter::new();
        let mut p = Matrix::zeros(2, 5);
        p[(0, 0)] = 1.5;
        p[(1, 0)] = -0.5;
        p[(1, 1)] = 2.0;
        let orig = p.clone();
        let f = lq_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        let l_pad = Matrix::from_fn(2, 5, |i, c| if c < 2 { f.r_or_l[(i, c)] } else { 0.0 });
        let rec = mul(&l_pad, &f.explicit_q().transpose());
        assert!(rec.sub_matrix(&orig).frobenius() <= 64.0 * 2.0 * EPS * orig.frobenius());

        let mut p = rnd(2, 7, 8);
        let f = lq_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        assert!(orth_err(&f.explicit_q()) <= 1e-14);
    }

    #[test]
    fn build_w_single_reflector() {
        let fc = FlopCounter::new();
        let y = Matrix::from_rows(&[&[1.0], &[0.5], &[-2.0]]);
        let t = Matrix::from_rows(&[&[-0.4]]);
        let w = build_w(Ctx::new(1, &fc), y.view(), t.view()).unwrap();
        for i in 0..3 {
            assert_eq!(w[(i, 0)], -0.4 * y[(i, 0)]);
        }
        let z = build_w(
            Ctx::new(1, &fc),
            Matrix::zeros(4, 2).view(),
            rnd(2, 2, 1).view(),
        )
        .unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn wy_equals_reflector_product() {
        let fc = FlopCounter::new();
        let mut p = rnd(9, 4, 6);
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 3).unwrap();
        let diff = f
            .explicit_q()
            .sub_matrix(&reflector_product(&f))
            .frobenius();
        assert!(diff <= 1e-13, "{diff}");
    }

    #[test]
    fn apply_left_and_right_match_dense() {
        let fc = FlopCounter::new();
        let mut p = rnd(10, 3, 9);
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        let q = f.explicit_q();
        let a = rnd(10, 3, 10);
        let mut got = a.clone();
        apply_wy_left(Ctx::new(1, &fc), got.view_mut(), &f).unwrap();
        let expect = mul(&q.transpose(), &a);
        assert!(got.sub_matrix(&expect).frobenius() <= 1e-13 * a.frobenius());

        let a = rnd(4, 10, 11);
        let mut got = a.clone();
        apply_wy_right(Ctx::new(1, &fc), got.view_mut(), &f).unwrap();
        let expect = mul(&a, &q);
        assert!(got.sub_matrix(&expect).frobenius() <= 1e-13 * a.frobenius());
    }

    #[test]
    fn apply_left_to_identity_gives_q_transpose() {
        let fc = FlopCounter::new();
        let mut p = rnd(6, 2, 12);
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        let mut e = Matrix::identity(6);
        apply_wy_left(Ctx::new(1, &fc), e.view_mut(), &f).unwrap();
        assert!(orth_err(&e) <= 1e-14);
        assert!(e.sub_matrix(&f.explicit_q().transpose()).max_abs() <= 1e-15);
    }

    #[test]
    fn apply_with_zero_w_is_noop() {
        let fc = FlopCounter::new();
        let f = PanelFactors {
            y: rnd(5, 2, 1),
            t: Matrix::zeros(2, 2),
            w: Matrix::zeros(5, 2),
            r_or_l: Matrix::zeros(2, 2),
            tau: vec![0.0; 2],
        };
        let a = rnd(5, 3, 2);
        let mut got = a.clone();
        apply_wy_left(Ctx::new(1, &fc), got.view_mut(), &f).unwrap();
        assert!(got.bit_eq(&a));
        let a = rnd(3, 5, 3);
        let mut got = a.clone();
        apply_wy_right(Ctx::new(1, &fc), got.view_mut(), &f).unwrap();
        assert!(got.bit_eq(&a));
    }

    #[test]
    fn two_sided_update_matches_dense_similarity() {
        let fc = FlopCounter::new();
        let g = rnd(12, 12, 13);
        let s = Matrix::from_fn(12, 12, |i, j| g[(i, j)] + g[(j, i)]);
        let mut p = rnd(12, 3, 14);
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        let q = f.explicit_q();
        let expect = mul(&mul(&q.transpose(), &s), &q);
        let mut got = s.clone();
        sym_two_sided_update(Ctx::new(1, &fc), got.view_mut(), &f).unwrap();
        got.mirror_lower();
        assert!(got.sub_matrix(&expect).frobenius() <= 1e-12 * s.frobenius());
    }

    #[test]
    fn two_sided_update_keeps_identity_and_zero_factors() {
        let fc = FlopCounter::new();
        let mut p = rnd(8, 2, 15);
        let f = qr_panel(Ctx::new(1, &fc), p.view_mut(), 16).unwrap();
        let mut a = Matrix::identity(8);
        sym_two_sided_update(Ctx::new(1, &fc), a.view_mut(), &f).unwrap();
        a.mirror_lower();
        assert!(a.sub_matrix(&Matrix::identity(8)).frobenius() <= 64.0 * 2.0 * EPS);

        let zero = PanelFactors {
            y: Matrix::zeros(8, 2),
            t: Matrix::zeros(2, 2),
            w: Matrix::zeros(8, 2),
            r_or_l: Matrix::zeros(2, 2),
            tau: vec![0.0; 2],
        };
        let g = rnd(8, 8, 16);
        let s = Matrix::from_fn(8, 8, |i, j| g[(i, j)] + g[(j, i)]);
        let mut got = s.clone();
        sym_two_sided_update(Ctx::new(1, &fc), got.view_mut(), &zero).unwrap();
        assert!(got.bit_eq(&s));
    }
}
