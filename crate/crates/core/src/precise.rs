//! Double-double symmetric eigensolver.
//!
//! Small-t eigenvalues of the deformation family reach 1e-24 relative to the
//! spectral radius, below what f64 can separate. Matrices are assembled in
//! double-double, pre-rotated by f64 eigenvectors, and finished with cyclic
//! Jacobi sweeps.

use twofloat::TwoFloat;

use crate::linalg::{sym_eigen, Mat};

pub type DD = TwoFloat;

const ZERO: DD = TwoFloat::from_f64(0.0);
const ONE: DD = TwoFloat::from_f64(1.0);

/// Row-major dense double-double matrix.
#[derive(Clone, Debug)]
pub struct DdMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<DD>,
}

impl DdMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn from_f64(a: &Mat) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                m.data[i * a.ncols() + j] = DD::from(a[(i, j)]);
            }
        }
        m
    }

    pub fn to_f64(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).hi())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> DD {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: DD) {
        self.data[i * self.cols + j] = v;
    }

    /// self + s * other
    pub fn axpy(&mut self, s: DD, other: &DdMat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * *b;
        }
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DdMat {
        let mut m = DdMat::zeros(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                m.set(i, j, self.get(r, c));
            }
        }
        m
    }

    pub fn transpose(&self) -> DdMat {
        let mut m = DdMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.set(j, i, self.get(i, j));
            }
        }
        m
    }

    pub fn mul(&self, other: &DdMat) -> DdMat {
        assert_eq!(self.cols, other.rows);
        let mut m = DdMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    m.data[idx] += a * other.get(k, j);
                }
            }
        }
        m
    }

    /// selfᵀ · self
    pub fn gram(&self) -> DdMat {
        self.transpose().mul(self)
    }

    /// self · selfᵀ
    pub fn cogram(&self) -> DdMat {
        self.mul(&self.transpose())
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x.hi() * x.hi()).sum::<f64>().sqrt()
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix
/// held in double-double.
pub fn sym_eigen_dd(a: &DdMat) -> (Vec<f64>, Mat) {
    let n = a.rows;
    assert_eq!(n, a.cols);
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    // f64 pre-rotation: b = v0ᵀ a v0 is diagonal up to f64 roundoff.
    let (_, v0) = sym_eigen(&a.to_f64());
    let mut v0 = DdMat::from_f64(&v0);
    orthonormalize_columns(&mut v0);
    orthonormalize_columns(&mut v0);
    let mut b = v0.transpose().mul(a).mul(&v0);
    for i in 0..n {
        for j in 0..i {
            let s = (b.get(i, j) + b.get(j, i)) * DD::from(0.5);
            b.set(i, j, s);
            b.set(j, i, s);
        }
    }
    let mut w = DdMat::zeros(n, n);
    for i in 0..n {
        w.set(i, i, ONE);
    }
    jacobi(&mut b, &mut w);
    let vecs = v0.mul(&w);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        b.get(i, i)
            .partial_cmp(&b.get(j, j))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = order.iter().map(|&i| b.get(i, i).hi()).collect();
    let v = Mat::from_fn(n, n, |r, c| vecs.get(r, order[c]).hi());
    (vals, v)
}

/// Modified Gram–Schmidt on the columns, in double-double.
fn orthonormalize_columns(v: &mut DdMat) {
    let (n, m) = (v.rows, v.cols);
    for j in 0..m {
        for k in 0..j {
            let mut dot = ZERO;
            for i in 0..n {
                dot += v.get(i, k) * v.get(i, j);
            }
            for i in 0..n {
                let x = v.get(i, j) - dot * v.get(i, k);
                v.set(i, j, x);
            }
        }
        let mut nrm = ZERO;
        for i in 0..n {
            nrm += v.get(i, j) * v.get(i, j);
        }
        let inv = ONE / nrm.sqrt();
        for i in 0..n {
            let x = v.get(i, j) * inv;
            v.set(i, j, x);
        }
    }
}

/// Cyclic Jacobi on a symmetric matrix, accumulating rotations into `w`.
fn jacobi(a: &mut DdMat, w: &mut DdMat) {
    let n = a.rows;
    let floor = 1e-34 * a.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let mag = apq.hi().abs();
                if mag <= floor {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let rel = (app.hi().abs() * aqq.hi().abs()).sqrt();
                if mag <= 1e-33 * rel {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (DD::from(2.0) * apq);
                let t = if theta.hi() >= 0.0 {
                    ONE / (theta + (ONE + theta * theta).sqrt())
                } else {
                    -ONE / (-theta + (ONE + theta * theta).sqrt())
                };
                let c = ONE / (ONE + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, ZERO);
                a.set(q, p, ZERO);
                for k in 0..n {
                    let wkp = w.get(k, p);
                    let wkq = w.get(k, q);
                    w.set(k, p, c * wkp - s * wkq);
                    w.set(k, q, s * wkp + c * wkq);
                }
            }
        }
        if !rotated {
            break;
        }
    }
}
