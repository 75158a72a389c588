//! Hodge theory on finite complexes, super-determinants and derived Euler
//! characteristics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graded::{GradedComplex, GradedSpace, GradingMode};
use crate::linalg::{
    count_zero_below, log_det_prime_below, max_abs, rank, select_columns, submatrix,
    sym_eigen, zero_threshold, Mat,
};
use crate::metric::MetricStructure;
use crate::tolerance::Tolerances;

#[derive(Debug, Clone)]
pub struct HodgeData {
    pub laplacian: Mat,
    pub dstar_d: Mat,
    pub d_dstar: Mat,
    /// Metric-orthonormal harmonic basis per parity, original coordinates.
    pub kernel: [Mat; 2],
    /// Harmonic basis per degree, for ℤ-graded complexes.
    pub kernel_by_degree: Option<Vec<Mat>>,
    /// Metric-orthogonal projector onto ker Δ.
    pub projector: Mat,
    /// Spectrum of Δ per parity, ascending.
    pub spectrum: [Vec<f64>; 2],
}

pub fn hodge(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<HodgeData> {
    let space = c.space();
    let frame = m.frame();
    let d = frame.to_ortho(c.differential());
    let dd = d.transpose() * &d;
    let ddt = &d * d.transpose();
    let lap = &dd + &ddt;
    let n = space.dim();

    let groups: Vec<Vec<usize>> = if c.mode() == GradingMode::Z {
        (0..=space.top_degree()).map(|k| space.indices_of_degree(k)).collect()
    } else {
        vec![space.indices_of_parity(0), space.indices_of_parity(1)]
    };
    let mut spectra = Vec::new();
    let mut eigs = Vec::new();
    for g in &groups {
        let (vals, vecs) = sym_eigen(&submatrix(&lap, g, g));
        spectra.push(vals.clone());
        eigs.push((vals, vecs));
    }
    let all: Vec<f64> = spectra.iter().flatten().copied().collect();
    let thr = zero_threshold(&all, tol.rank);

    let par = space.parities();
    let mut kernel_cols: [Vec<nalgebra::DVector<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut by_degree = Vec::new();
    let mut spectrum: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (g, (vals, vecs)) in groups.iter().zip(&eigs) {
        let z = count_zero_below(vals, thr, "hodge Laplacian")?;
        let mut deg_cols = Vec::new();
        for j in 0..z {
            let mut v = nalgebra::DVector::zeros(n);
            for (r, &i) in g.iter().enumerate() {
                v[i] = vecs[(r, j)];
            }
            deg_cols.push(v.clone());
            let p = if g.is_empty() { 0 } else { par[g[0]] as usize };
            kernel_cols[p].push(v);
        }
        if let Some(&i0) = g.first() {
            spectrum[par[i0] as usize].extend(vals.iter().copied());
        }
        by_degree.push(deg_cols);
    }
    for s in spectrum.iter_mut() {
        s.sort_by(f64::total_cmp);
    }
    let to_mat = |cols: &[nalgebra::DVector<f64>]| {
        if cols.is_empty() {
            Mat::zeros(n, 0)
        } else {
            Mat::from_columns(cols)
        }
    };
    let k_ortho = [to_mat(&kernel_cols[0]), to_mat(&kernel_cols[1])];
    let mut proj = Mat::zeros(n, n);
    for k in &k_ortho {
        proj += k * k.transpose();
    }
    let kernel = [frame.vecs_from_ortho(&k_ortho[0]), frame.vecs_from_ortho(&k_ortho[1])];
    let kernel_by_degree = if c.mode() == GradingMode::Z {
        Some(by_degree.iter().map(|cols| frame.vecs_from_ortho(&to_mat(cols))).collect())
    } else {
        None
    };
    Ok(HodgeData {
        laplacian: frame.from_ortho(&lap),
        dstar_d: frame.from_ortho(&dd),
        d_dstar: frame.from_ortho(&ddt),
        kernel,
        kernel_by_degree,
        projector: frame.from_ortho(&proj),
        spectrum,
    })
}

impl HodgeData {
    pub fn harmonic_dims(&self) -> [usize; 2] {
        [self.kernel[0].ncols(), self.kernel[1].ncols()]
    }

    /// Largest pairwise inner product between orthonormal bases of ker Δ,
    /// im D and im D* (metric inner products).
    pub fn orthogonality_residual(&self, c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<f64> {
        let frame = m.frame();
        let d = frame.to_ortho(c.differential());
        let im = crate::linalg::column_span(&d, tol.rank, "im D")?;
        let imt = crate::linalg::column_span(&d.transpose(), tol.rank, "im D*")?;
        let mut h = Mat::zeros(d.nrows(), 0);
        for k in &self.kernel {
            let ko = frame.vecs_to_ortho(k);
            h = Mat::from_columns(&h.column_iter().chain(ko.column_iter()).map(|c| c.into_owned()).collect::<Vec<_>>());
        }
        let pairs = [(&h, &im), (&h, &imt), (&im, &imt)];
        let mut worst: f64 = 0.0;
        for (a, b) in pairs {
            if a.ncols() > 0 && b.ncols() > 0 {
                worst = worst.max(max_abs(&(a.transpose() * b)));
            }
        }
        let total = h.ncols() + im.ncols() + imt.ncols();
        if total != d.nrows() {
            return Err(Error::Invalid(format!(
                "Hodge summands have total dimension {total}, space has {}",
                d.nrows()
            )));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohomologyDims {
    pub parity: [usize; 2],
    pub degree: Option<Vec<usize>>,
}

/// Brute-force cohomology dimensions: dim ker − rank of the incoming map.
pub fn cohomology_dims(c: &GradedComplex, tol: &Tolerances) -> Result<CohomologyDims> {
    let space = c.space();
    let d = c.differential();
    let mut parity = [0, 0];
    for p in 0..2u8 {
        let cols = space.indices_of_parity(p);
        let inc = space.indices_of_parity(1 - p);
        let out_rank = rank(&select_columns(d, &cols), tol.rank, "cohomology rank")?;
        let in_rank = rank(&select_columns(d, &inc), tol.rank, "cohomology rank")?;
        parity[p as usize] = cols.len() - out_rank - in_rank;
    }
    let degree = if c.mode() == GradingMode::Z {
        let top = space.top_degree();
        let mut b = Vec::with_capacity(top + 1);
        for k in 0..=top {
            let dk = c.block(k, k + 1);
            let dim_k = space.indices_of_degree(k).len();
            let ker = if dim_k == 0 {
                0
            } else if dk.nrows() == 0 {
                dim_k
            } else {
                dim_k - rank(&dk, tol.rank, "cohomology rank")?
            };
            let inc = if k == 0 { 0 } else { rank(&c.block(k - 1, k), tol.rank, "cohomology rank")? };
            b.push(ker - inc);
        }
        Some(b)
    } else {
        None
    };
    Ok(CohomologyDims { parity, degree })
}

/// log sdet' and χ'_fin of an even PSD operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperDet {
    /// log Π λ₊ − log Π λ₋ over nonzero eigenvalues.
    pub log: f64,
    /// rank(A₊) − rank(A₋).
    pub chi: i64,
    pub ranks: [usize; 2],
}

impl SuperDet {
    pub fn value(&self) -> f64 {
        self.log.exp()
    }
}

/// sdet' from per-parity spectra with one shared rank threshold.
pub fn sdet_from_spectra(spectra: &[Vec<f64>; 2], tau: f64, context: &str) -> Result<SuperDet> {
    let all: Vec<f64> = spectra.iter().flatten().copied().collect();
    let thr = zero_threshold(&all, tau);
    let (l0, r0) = log_det_prime_below(&spectra[0], thr, context)?;
    let (l1, r1) = log_det_prime_below(&spectra[1], thr, context)?;
    Ok(SuperDet {
        log: l0 - l1,
        chi: r0 as i64 - r1 as i64,
        ranks: [r0, r1],
    })
}

/// sdet'(A) for an even operator, self-adjoint with respect to `m`.
pub fn sdet_prime(a: &Mat, space: &GradedSpace, m: &MetricStructure, tol: &Tolerances) -> Result<SuperDet> {
    let at = m.frame().to_ortho(a);
    let mut spectra: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for p in 0..2u8 {
        let ix = space.indices_of_parity(p);
        let off = space.indices_of_parity(1 - p);
        if !ix.is_empty() && !off.is_empty() && max_abs(&submatrix(&at, &off, &ix)) > 0.0 {
            return Err(Error::Invalid("sdet' needs a parity-preserving operator".into()));
        }
        spectra[p as usize] = sym_eigen(&submatrix(&at, &ix, &ix)).0;
    }
    sdet_from_spectra(&spectra, tol.rank, "sdet'")
}

/// Spectra of D*D per parity (Gram of the parity column blocks).
pub fn dstar_d_spectra(d: &Mat, space: &GradedSpace, m: &MetricStructure) -> [Vec<f64>; 2] {
    let dt = m.frame().to_ortho(d);
    let mut spectra: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for p in 0..2u8 {
        let cols = space.indices_of_parity(p);
        let b = select_columns(&dt, &cols);
        spectra[p as usize] = sym_eigen(&(b.transpose() * &b)).0;
    }
    spectra
}

/// sdet'(D*D) and χ'_fin(D*D).
pub fn sdet_dstar_d(d: &Mat, space: &GradedSpace, m: &MetricStructure, tol: &Tolerances) -> Result<SuperDet> {
    sdet_from_spectra(&dstar_d_spectra(d, space, m), tol.rank, "sdet'(D*D)")
}

/// Σ_k (−1)^k k b_k.
pub fn graded_euler(betti: &[usize]) -> i64 {
    betti
        .iter()
        .enumerate()
        .map(|(k, &b)| if k % 2 == 0 { (k * b) as i64 } else { -((k * b) as i64) })
        .sum()
}

/// p'(−1) for p(x) = Σ b_k x^k, by Horner on the derivative. Note
/// p'(−1) = Σ k b_k (−1)^{k−1} = −Σ (−1)^k k b_k.
pub fn poincare_derivative_at_minus_one(betti: &[usize]) -> i64 {
    let deriv: Vec<i64> = betti.iter().enumerate().skip(1).map(|(k, &b)| (k * b) as i64).collect();
    // Horner at x = −1
    deriv.iter().rev().fold(0i64, |acc, &c| -acc + c)
}
