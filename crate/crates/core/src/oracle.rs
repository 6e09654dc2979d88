//! Slow, independent reference solvers and residual checks. Nothing here uses
//! the blocked kernels, so they can judge the reductions.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest order accepted by [`jacobi_eigen`].
pub const EIGEN_MAX_ORDER: usize = 256;
/// Largest `min(m, n)` accepted by [`jacobi_svd`].
pub const SVD_MAX_MIN_DIM: usize = 128;
const MAX_SWEEPS: usize = 100;

/// Outcome of comparing a band output against its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Eigenvalues or singular values of the output, sorted descending.
    pub values: Vec<f64>,
    /// Largest stored magnitude outside the expected band.
    pub max_abs_offband: f64,
    /// Largest deviation from the input's sorted values.
    pub residual: f64,
}

fn sort_desc(v: &mut [f64]) {
    v.sort_by(|a, b| b.total_cmp(a));
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, sorted descending.
pub fn jacobi_eigen(s: &Matrix) -> Result<Vec<f64>> {
    if !s.is_square() {
        return Err(Error::Dimension(format!(
            "eigen oracle needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    if n > EIGEN_MAX_ORDER {
        return Err(Error::Config(format!(
            "eigen oracle limited to order {EIGEN_MAX_ORDER}, got {n}"
        )));
    }
    let norm = s.frobenius();
    let asym = s.asymmetry();
    if asym > 1e-12 * norm {
        return Err(Error::NotSymmetric(asym));
    }
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let off = |a: &Matrix| {
        let mut t = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    t += a[(i, j)] * a[(i, j)];
                }
            }
        }
        t.sqrt()
    };
    let tol = 1e-14 * norm;
    let mut sweeps = 0;
    while off(&a) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    sort_desc(&mut v);
    Ok(v)
}

/// Singular values by one-sided Jacobi on columns, sorted descending.
pub fn jacobi_svd(a: &Matrix) -> Result<Vec<f64>> {
    let mut u = if a.rows() >= a.cols() {
        a.clone()
    } else {
        a.transpose()
    };
    let (m, n) = (u.rows(), u.cols());
    if n > SVD_MAX_MIN_DIM {
        return Err(Error::Config(format!(
            "svd oracle limited to min(m, n) = {SVD_MAX_MIN_DIM}, got {n}"
        )));
    }
    let floor = 1e-30 * a.frobenius().powi(2);
    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= 1e-14 * (alpha * beta).sqrt() || gamma.abs() <= floor {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
        sweeps += 1;
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
    }
    let mut v: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt())
        .collect();
    sort_desc(&mut v);
    Ok(v)
}

/// 2-norm via the singular value oracle.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(jacobi_svd(a)?.first().copied().unwrap_or(0.0))
}

/// Max `|B[i][j]|` over entries with `i - j > lower_bw` or `j - i > upper_bw`.
pub fn band_check(b: &Matrix, lower_bw: usize, upper_bw: usize) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..b.cols() {
        for i in 0..b.rows() {
            if i > j + lower_bw || j > i + upper_bw {
                worst = worst.max(b[(i, j)].abs());
            }
        }
    }
    worst
}

fn gram_minus_identity(q: &Matrix) -> Matrix {
    let n = q.cols();
    Matrix::from_fn(n, n, |i, j| {
        let dot: f64 = (0..q.rows()).map(|k| q[(k, i)] * q[(k, j)]).sum();
        dot - if i == j { 1.0 } else { 0.0 }
    })
}

/// `||QᵀQ - I||_F`.
pub fn orth_residual(q: &Matrix) -> f64 {
    gram_minus_identity(q).frobenius()
}

/// `||QᵀAQ - B||_F` with plain loops.
pub fn similarity_residual(q: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows();
    let aq = Matrix::from_fn(n, q.cols(), |i, j| {
        (0..n).map(|k| a[(i, k)] * q[(k, j)]).sum()
    });
    let qaq = Matrix::from_fn(q.cols(), q.cols(), |i, j| {
        (0..n).map(|k| q[(k, i)] * aq[(k, j)]).sum()
    });
    qaq.sub_matrix(b).frobenius()
}

/// Compares two sorted lists; returns whether every deviation is `<= tol` and
/// the largest deviation. Lists of different length never match.
pub fn spectra_match(a: &[f64], b: &[f64], tol: f64) -> (bool, f64) {
    if a.len() != b.len() {
        return (false, f64::INFINITY);
    }
    let dev = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    (dev <= tol, dev)
}

/// Eigenvalue comparison of a symmetric band output with bandwidth `w`.
pub fn sym_band_report(input: &Matrix, band: &Matrix, w: usize) -> Result<SpectrumReport> {
    let before = jacobi_eigen(input)?;
    let values = jacobi_eigen(band)?;
    let (_, residual) = spectra_match(&before, &values, 0.0);
    Ok(SpectrumReport {
        values,
        max_abs_offband: band_check(band, w, w),
        residual,
    })
}

/// Singular value comparison of a band output with the given bandwidths.
pub fn svd_band_report(
    input: &Matrix,
    band: &Matrix,
    lower_bw: usize,
    upper_bw: usize,
) -> Result<SpectrumReport> {
    let before = jacobi_svd(input)?;
    let values = jacobi_svd(band)?;
    let (_, residual) = spectra_match(&before, &values, 0.0);
    Ok(SpectrumReport {
        values,
        max_abs_offband: band_check(band, lower_bw, upper_bw),
        residual,
    })
}
