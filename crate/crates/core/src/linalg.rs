//! Dense helpers over `nalgebra::DMatrix<f64>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tolerance::DEAD_ZONE;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Largest singular value.
pub fn op_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let g = if a.nrows() < a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let (vals, _) = sym_eigen(&g);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Eigen-decomposition of the symmetric part of `a`, eigenvalues ascending.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let s = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Threshold below which an eigenvalue of a PSD operator is treated as zero.
pub fn zero_threshold(vals: &[f64], tau: f64) -> f64 {
    let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    tau * top.max(1.0)
}

/// Number of zero eigenvalues of a PSD spectrum, refusing dead-zone values.
pub fn count_zero(vals: &[f64], tau: f64, context: &str) -> Result<usize> {
    count_zero_below(vals, zero_threshold(vals, tau), context)
}

/// As [`count_zero`] with an externally fixed threshold.
pub fn count_zero_below(vals: &[f64], thr: f64, context: &str) -> Result<usize> {
    let upper = DEAD_ZONE * thr;
    let mut zeros = 0;
    for &v in vals {
        if v < thr {
            zeros += 1;
        } else if v < upper {
            return Err(Error::AmbiguousKernel {
                context: context.to_string(),
                value: v,
                tau: thr,
                upper,
            });
        }
    }
    Ok(zeros)
}

/// Sum of logs and count of the nonzero eigenvalues of a PSD spectrum.
pub fn log_det_prime(vals: &[f64], tau: f64, context: &str) -> Result<(f64, usize)> {
    log_det_prime_below(vals, zero_threshold(vals, tau), context)
}

/// As [`log_det_prime`] with an externally fixed threshold.
pub fn log_det_prime_below(vals: &[f64], thr: f64, context: &str) -> Result<(f64, usize)> {
    let zeros = count_zero_below(vals, thr, context)?;
    let mut acc = 0.0;
    let mut n = 0;
    for &v in vals {
        if v >= thr {
            acc += v.ln();
            n += 1;
        }
    }
    debug_assert_eq!(n + zeros, vals.len());
    Ok((acc, n))
}

/// Orthonormal basis of the kernel of a symmetric PSD matrix.
pub fn psd_kernel(a: &Mat, tau: f64, context: &str) -> Result<Mat> {
    let (vals, vecs) = sym_eigen(a);
    let k = count_zero(&vals, tau, context)?;
    Ok(vecs.columns(0, k).into_owned())
}

/// Orthonormal basis of ker `a` (columns), from the spectrum of aᵀa.
pub fn null_space(a: &Mat, tau: f64, context: &str) -> Result<Mat> {
    if a.nrows() == 0 {
        return Ok(Mat::identity(a.ncols(), a.ncols()));
    }
    psd_kernel(&(a.transpose() * a), tau, context)
}

/// Rank of `a` judged on the spectrum of aᵀa.
pub fn rank(a: &Mat, tau: f64, context: &str) -> Result<usize> {
    if a.is_empty() {
        return Ok(0);
    }
    let (vals, _) = sym_eigen(&(a.transpose() * a));
    Ok(vals.len() - count_zero(&vals, tau, context)?)
}

/// Orthonormal basis of the column span of `a`.
pub fn column_span(a: &Mat, tau: f64, context: &str) -> Result<Mat> {
    if a.ncols() == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    let (vals, vecs) = sym_eigen(&(a * a.transpose()));
    let z = count_zero(&vals, tau, context)?;
    let n = vals.len();
    Ok(vecs.columns(z, n - z).into_owned())
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &Mat, b: &Vector) -> Vector {
    if a.ncols() == 0 {
        return Vector::zeros(0);
    }
    if a.nrows() == 0 {
        return Vector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-12 * smax.max(1e-300);
    svd.solve(b, eps).unwrap_or_else(|_| Vector::zeros(a.ncols()))
}

/// Moore–Penrose pseudo-inverse with a relative singular-value cut.
pub fn pinv(a: &Mat) -> Mat {
    if a.is_empty() {
        return Mat::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(1e-12 * smax.max(1e-300))
        .unwrap_or_else(|_| Mat::zeros(a.ncols(), a.nrows()))
}

pub fn submatrix(a: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn select_columns(a: &Mat, cols: &[usize]) -> Mat {
    Mat::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Signed log|det| of a square matrix via LU; `None` if singular.
pub fn log_abs_det(a: &Mat) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// Index of the largest-magnitude entry of a vector.
pub fn argmax_abs(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, -1.0);
    for (i, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best.0
}
