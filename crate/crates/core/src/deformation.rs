//! The adiabatic family D_t = d + Σ tⁱ H_{2i+1}.
//!
//! Spectra of Q_t = D_t*D_t and Δ_t are taken per parity in orthonormal
//! coordinates of the base metric. Near t = 0 the unstable eigenvalues fall
//! as t^ν with ν up to n − 1, far below f64 resolution relative to the
//! spectral radius, so small-t matrices are assembled and diagonalized in
//! double-double.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{ExteriorModel, FluxForm, MatrixComplexDoc};
use crate::graded::{sign, GradedComplex, GradedSpace, GradingMode};
use crate::hodge::{sdet_from_spectra, SuperDet};
use crate::linalg::{max_abs, op_norm, select_columns, submatrix, sym_eigen, zero_threshold, Mat};
use crate::metric::MetricStructure;
use crate::precise::{sym_eigen_dd, DdMat, DD};
use crate::tolerance::{Tolerances, GRADING, SLOPE};

/// Below this ratio of smallest nonzero to largest eigenvalue the f64
/// spectrum is discarded in favour of the double-double one.
const F64_GAP: f64 = 1e-6;

/// Germ-law residuals below this are roundoff and exempt from monotonicity.
const MONOTONE_FLOOR: f64 = 1e-8;

/// Deviation of Str(N P_t) from χ'₀ treated as exact convergence.
const EXACT_GRADING: f64 = 1e-10;

/// Geometric grid of deformation parameters in (0, 1], ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    points: Vec<f64>,
}

impl TGrid {
    pub fn geom(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max <= 1.0 && min < max) {
            return Err(Error::Grid(format!("need 0 < min < max ≤ 1, got min={min}, max={max}")));
        }
        if count < 2 {
            return Err(Error::Grid(format!("need at least 2 points, got {count}")));
        }
        let (a, b) = (min.ln(), max.ln());
        let mut points: Vec<f64> = (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect();
        points[0] = min;
        points[count - 1] = max;
        Ok(Self { points })
    }

    /// Parses `geom:<min>:<max>:<count>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 4 || parts[0] != "geom" {
            return Err(Error::Grid(format!("expected geom:<min>:<max>:<count>, got '{spec}'")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Grid(format!("bad number '{s}' in '{spec}'")));
        let count = parts[3]
            .parse::<usize>()
            .map_err(|_| Error::Grid(format!("bad count '{}' in '{spec}'", parts[3])))?;
        Self::geom(num(parts[1])?, num(parts[2])?, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn decades(&self) -> f64 {
        (self.points[self.points.len() - 1] / self.points[0]).log10()
    }

    /// Germ extraction needs ≥ 10 points over ≥ 4 decades.
    pub fn check_germ_ready(&self) -> Result<()> {
        if self.points.len() < 10 || self.decades() < 4.0 - 1e-9 {
            return Err(Error::Grid(format!(
                "{} points over {:.1} decades cannot resolve branch exponents; need ≥ 10 points over ≥ 4 decades (try geom:1e-6:1:40)",
                self.points.len(),
                self.decades()
            )));
        }
        Ok(())
    }
}

impl Default for TGrid {
    fn default() -> Self {
        Self::geom(1e-6, 1.0, 40).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Stable,
    Unstable,
    Nonvanishing,
}

impl BranchKind {
    /// Numeric type label: 1 stable, 2 unstable, 3 nonvanishing.
    pub fn type_number(self) -> u8 {
        match self {
            Self::Stable => 1,
            Self::Unstable => 2,
            Self::Nonvanishing => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBranch {
    pub parity: u8,
    pub index: usize,
    pub kind: BranchKind,
    /// Exponent of the leading power (unstable branches only).
    pub nu: Option<u32>,
    /// λ̄(0) for unstable branches, λ(0) for nonvanishing ones.
    pub leading: Option<f64>,
    /// Log-log slope over the three smallest samples.
    pub slope: Option<f64>,
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermSummary {
    /// Σν over unstable branches, per parity.
    pub alpha: [u32; 2],
    /// Σ log λ̄(0) over unstable branches, per parity.
    pub log_theta: [f64; 2],
    pub stable: [usize; 2],
    pub unstable: [usize; 2],
    pub nonvanishing: [usize; 2],
    pub chi0: i64,
}

impl GermSummary {
    pub fn alpha_difference(&self) -> i64 {
        self.alpha[0] as i64 - self.alpha[1] as i64
    }

    /// log(θ₀̄/θ₁̄).
    pub fn log_theta_ratio(&self) -> f64 {
        self.log_theta[0] - self.log_theta[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi0Estimate {
    pub chi0: i64,
    pub extrapolated: f64,
    pub residual: f64,
    /// Observed order from e(t)/e(t/2) at a moderate t; None when the
    /// deviation is already below roundoff.
    pub order: Option<f64>,
    pub order_t: f64,
}

impl Chi0Estimate {
    pub fn order_ok(&self) -> bool {
        self.order.is_none_or(|o| o >= 0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub log_gamma: f64,
    pub chi0: i64,
    pub tail: f64,
    /// (s, Str(N P_s) − χ'₀) at the quadrature nodes.
    pub integrand: Vec<(f64, f64)>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub t: f64,
    pub h: f64,
    /// Central difference of log sdet'(Q_t).
    pub derivative: f64,
    /// (Str(N P_t) − χ'_fin(d_H) − S)/t.
    pub predicted: f64,
    /// S = Σ(−1)^k k dim V^k, zero for exterior models on ≥ 2 generators.
    pub index_term: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermLawReport {
    pub fitted_exponent: f64,
    pub exponent: i64,
    pub branch_exponent: i64,
    pub intercept: f64,
    pub expected_intercept: f64,
    /// (t, |log sdet'(Q_t) − predicted|) for the smallest grid points, ascending t.
    pub residuals: Vec<(f64, f64)>,
    pub monotone: bool,
}

impl GermLawReport {
    pub fn intercept_error(&self) -> f64 {
        (self.intercept - self.expected_intercept).abs()
    }
}

/// d + Σ tⁱ H_{2i+1} over a ℤ-graded base with a fixed metric.
#[derive(Debug, Clone)]
pub struct DeformationFamily {
    name: String,
    base: GradedComplex,
    flux_terms: Vec<(usize, Mat)>,
    metric: MetricStructure,
    tol: Tolerances,
    d_ortho: Mat,
    h_ortho: Vec<(usize, Mat)>,
    /// Zero eigenvalues of Q_t and of Δ_t per parity (constant for t > 0).
    q_zero: [usize; 2],
    kernel: [usize; 2],
}

impl DeformationFamily {
    pub fn new(
        name: &str,
        base: GradedComplex,
        flux_terms: Vec<(usize, Mat)>,
        metric: MetricStructure,
        tol: Tolerances,
    ) -> Result<Self> {
        let space = base.space().clone();
        if !space.is_degree_parity() {
            return Err(Error::Invalid("deformation base must have parity = degree mod 2".into()));
        }
        if base.shifts().iter().any(|&s| s != 1) {
            return Err(Error::Invalid("deformation base must be ℤ-graded".into()));
        }
        let deg = space.degrees();
        for (i, h) in &flux_terms {
            if *i == 0 {
                return Err(Error::Invalid("flux exponents start at i = 1".into()));
            }
            if h.nrows() != space.dim() || h.ncols() != space.dim() {
                return Err(Error::Shape(format!("flux term {i} has the wrong size")));
            }
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    if h[(r, c)] != 0.0 && deg[r] != deg[c] + 2 * i + 1 {
                        return Err(Error::Invalid(format!("flux term {i} must raise degree by {}", 2 * i + 1)));
                    }
                }
            }
        }
        let frame = metric.frame();
        let d_ortho = frame.to_ortho(base.differential());
        let h_ortho = flux_terms.iter().map(|(i, h)| (*i, frame.to_ortho(h))).collect();
        let mut fam = Self {
            name: name.to_string(),
            base: GradedComplex::new_unchecked(space, base.differential().clone(), GradingMode::Z)?,
            flux_terms,
            metric,
            tol,
            d_ortho,
            h_ortho,
            q_zero: [0, 0],
            kernel: [0, 0],
        };
        let dh = fam.evaluate(1.0);
        let bound = tol.flat * op_norm(&dh).max(1.0).powi(2);
        let res = max_abs(&(&dh * &dh));
        if res >= bound {
            return Err(Error::NotSquareZero { residual: res, bound });
        }
        let q1 = fam.q_spectra_f64(1.0);
        let thr = zero_threshold(&q1.iter().flatten().copied().collect::<Vec<_>>(), tol.rank);
        let l1 = fam.laplacian_spectra_f64(1.0);
        let thr_l = zero_threshold(&l1.iter().flatten().copied().collect::<Vec<_>>(), tol.rank);
        for p in 0..2 {
            fam.q_zero[p] = crate::linalg::count_zero_below(&q1[p], thr, "Q_1")?;
            fam.kernel[p] = crate::linalg::count_zero_below(&l1[p], thr_l, "Δ_1")?;
        }
        Ok(fam)
    }

    /// Family from an exterior model: H_{2i+1} = wedge by the degree-(2i+1) component.
    pub fn from_exterior(model: &ExteriorModel, flux: &FluxForm, metric: MetricStructure, tol: Tolerances) -> Result<Self> {
        let terms = flux
            .components()
            .iter()
            .map(|(k, v)| ((k - 1) / 2, model.wedge_operator(v)))
            .collect();
        Self::new(model.name(), model.complex(), terms, metric, tol)
    }

    /// Family from a matrix complex: unit-shift blocks form d; longer odd
    /// shifts join the declared flux terms.
    pub fn from_matrix_doc(doc: &MatrixComplexDoc, tol: Tolerances) -> Result<Self> {
        let c = &doc.complex;
        let space = c.space().clone();
        let base = GradedComplex::new_unchecked(space, c.component(1), GradingMode::Z)?;
        let mut terms: Vec<(usize, Mat)> = doc.flux_terms.clone();
        for s in c.shifts() {
            if s == 1 {
                continue;
            }
            if s % 2 == 0 {
                return Err(Error::Invalid(format!("block of even shift {s} in a deformation base")));
            }
            let comp = c.component(s);
            let i = (s - 1) / 2;
            match terms.iter_mut().find(|(j, _)| *j == i) {
                Some((_, m)) => *m += comp,
                None => terms.push((i, comp)),
            }
        }
        terms.sort_by_key(|(i, _)| *i);
        Self::new(&doc.name, base, terms, doc.metric.clone(), tol)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base(&self) -> &GradedComplex {
        &self.base
    }

    pub fn space(&self) -> &GradedSpace {
        self.base.space()
    }

    pub fn metric(&self) -> &MetricStructure {
        &self.metric
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn flux_terms(&self) -> &[(usize, Mat)] {
        &self.flux_terms
    }

    /// Components of d_H keyed by degree shift (1 for d, 2i+1 for H_{2i+1}).
    pub fn components(&self) -> Vec<(usize, Mat)> {
        let mut out = vec![(1, self.base.differential().clone())];
        out.extend(self.flux_terms.iter().map(|(i, h)| (2 * i + 1, h.clone())));
        out
    }

    /// Dimension of ker Δ_t per parity, t > 0.
    pub fn kernel_dims(&self) -> [usize; 2] {
        self.kernel
    }

    /// Number of zero eigenvalues of Q_t per parity, t > 0.
    pub fn stable_counts(&self) -> [usize; 2] {
        self.q_zero
    }

    /// D_t as a matrix.
    pub fn evaluate(&self, t: f64) -> Mat {
        let mut d = self.base.differential().clone();
        for (i, h) in &self.flux_terms {
            d += h * t.powi(*i as i32);
        }
        d
    }

    /// D_t as a complex: the base at t = 0, ℤ₂-graded otherwise.
    pub fn evaluate_complex(&self, t: f64) -> Result<GradedComplex> {
        if t < 0.0 {
            return Err(Error::Invalid(format!("t must be ≥ 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(self.base.clone());
        }
        GradedComplex::new_unchecked(self.space().clone(), self.evaluate(t), GradingMode::Z2)
    }

    /// ‖t^{1/2} D_t − ρ_t d_H ρ_t^{−1}‖_max.
    pub fn scaling_identity_residual(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Err(Error::Invalid(format!("scaling identity needs t > 0, got {t}")));
        }
        let space = self.space();
        let rho = space.rho(t);
        let rho_inv = space.rho(1.0 / t);
        let lhs = self.evaluate(t) * t.sqrt();
        let rhs = rho * self.evaluate(1.0) * rho_inv;
        Ok(max_abs(&(lhs - rhs)))
    }

    fn d_ortho_at(&self, t: f64) -> Mat {
        let mut d = self.d_ortho.clone();
        for (i, h) in &self.h_ortho {
            d += h * t.powi(*i as i32);
        }
        d
    }

    /// D_t in orthonormal coordinates with every entry formed in double-double.
    fn d_ortho_dd(&self, t: f64) -> DdMat {
        let mut d = DdMat::from_f64(&self.d_ortho);
        let tt = DD::from(t);
        for (i, h) in &self.h_ortho {
            let mut s = DD::from(1.0);
            for _ in 0..*i {
                s *= tt;
            }
            d.axpy(s, &DdMat::from_f64(h));
        }
        d
    }

    fn parity_blocks(&self) -> [Vec<usize>; 2] {
        [self.space().indices_of_parity(0), self.space().indices_of_parity(1)]
    }

    fn q_spectra_f64(&self, t: f64) -> [Vec<f64>; 2] {
        let d = self.d_ortho_at(t);
        let ix = self.parity_blocks();
        [0, 1].map(|p| {
            let b = select_columns(&d, &ix[p]);
            sym_eigen(&(b.transpose() * &b)).0
        })
    }

    fn laplacian_blocks_f64(&self, t: f64) -> [Mat; 2] {
        let d = self.d_ortho_at(t);
        let lap = d.transpose() * &d + &d * d.transpose();
        let ix = self.parity_blocks();
        [0, 1].map(|p| submatrix(&lap, &ix[p], &ix[p]))
    }

    fn laplacian_spectra_f64(&self, t: f64) -> [Vec<f64>; 2] {
        self.laplacian_blocks_f64(t).map(|l| sym_eigen(&l).0)
    }

    fn resolved(vals: &[f64], zeros: usize) -> bool {
        let top = vals.last().copied().unwrap_or(0.0);
        match vals.get(zeros) {
            None => true,
            Some(&v) => top > 0.0 && v / top > F64_GAP,
        }
    }

    /// Full spectrum of Q_t per parity, ascending.
    pub fn q_spectra(&self, t: f64) -> [Vec<f64>; 2] {
        let fast = self.q_spectra_f64(t);
        if (0..2).all(|p| Self::resolved(&fast[p], self.q_zero[p])) {
            return fast;
        }
        let d = self.d_ortho_dd(t);
        let all: Vec<usize> = (0..d.rows).collect();
        let ix = self.parity_blocks();
        [0, 1].map(|p| sym_eigen_dd(&d.select(&all, &ix[p]).gram()).0)
    }

    /// Orthonormal basis of ker Δ_t per parity, orthonormal coordinates of
    /// the parity block.
    fn kernel_ortho(&self, t: f64) -> [Mat; 2] {
        let fast = self.laplacian_blocks_f64(t);
        let ix = self.parity_blocks();
        [0, 1].map(|p| {
            let k = self.kernel[p];
            let (vals, vecs) = sym_eigen(&fast[p]);
            let (_, vecs) = if Self::resolved(&vals, k) {
                (vals, vecs)
            } else {
                let d = self.d_ortho_dd(t);
                let all: Vec<usize> = (0..d.rows).collect();
                let b = d.select(&all, &ix[p]);
                let c = d.select(&ix[p], &ix[1 - p]);
                let mut lap = b.gram();
                lap.axpy(DD::from(1.0), &c.cogram());
                sym_eigen_dd(&lap)
            };
            vecs.columns(0, k).into_owned()
        })
    }

    /// Str(N P_t) with P_t the orthogonal projector onto ker Δ_t.
    pub fn str_np(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Err(Error::Invalid(format!("Str(N P_t) needs t > 0, got {t}")));
        }
        let deg = self.space().degrees();
        let ix = self.parity_blocks();
        let ker = self.kernel_ortho(t);
        let mut s = 0.0;
        for p in 0..2 {
            for (r, &i) in ix[p].iter().enumerate() {
                let w: f64 = ker[p].row(r).iter().map(|x| x * x).sum();
                s += sign(p as u8) * deg[i] as f64 * w;
            }
        }
        Ok(s)
    }

    /// log sdet'(Q_t), dropping the kernel counted at t = 1.
    pub fn log_sdet_q(&self, t: f64) -> f64 {
        let spec = self.q_spectra(t);
        (0..2)
            .map(|p| sign(p as u8) * spec[p][self.q_zero[p]..].iter().map(|v| v.ln()).sum::<f64>())
            .sum()
    }

    /// sdet'(D*D) of the base differential.
    pub fn base_sdet(&self) -> Result<SuperDet> {
        sdet_from_spectra(&self.q_spectra_f64(0.0), self.tol.rank, "sdet'(d*d)")
    }

    /// sdet'(d_H*d_H).
    pub fn twisted_sdet(&self) -> Result<SuperDet> {
        sdet_from_spectra(&self.q_spectra_f64(1.0), self.tol.rank, "sdet'(d_H*d_H)")
    }

    /// Branches of Q_t on one parity, matched by rank order of the nonzero
    /// eigenvalues.
    pub fn track_branches(&self, grid: &TGrid, parity: u8) -> Result<Vec<EigenBranch>> {
        grid.check_germ_ready()?;
        let spectra: Vec<Vec<f64>> = grid.points().par_iter().map(|&t| self.q_spectra(t)[parity as usize].clone()).collect();
        self.branches_from(grid, parity, &spectra)
    }

    fn branches_from(&self, grid: &TGrid, parity: u8, spectra: &[Vec<f64>]) -> Result<Vec<EigenBranch>> {
        let ts = grid.points();
        let p = parity as usize;
        let n = spectra[0].len();
        let z = self.q_zero[p];
        let paths = match_branches(ts, spectra, z);
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let samples: Vec<(f64, f64)> = ts.iter().zip(&paths).map(|(&t, s)| (t, s[j])).collect();
            if j < z {
                out.push(EigenBranch {
                    parity,
                    index: j,
                    kind: BranchKind::Stable,
                    nu: None,
                    leading: None,
                    slope: None,
                    samples,
                });
                continue;
            }
            let lx: Vec<f64> = samples[..3].iter().map(|(t, _)| t.ln()).collect();
            let ly: Vec<f64> = samples[..3].iter().map(|(_, v)| v.ln()).collect();
            let slope = fit_slope(&lx, &ly);
            let nu = slope.round();
            let residual = (slope - nu).abs();
            if !slope.is_finite() || residual >= SLOPE || nu < 0.0 {
                return Err(Error::UnresolvedBranch {
                    parity,
                    index: j,
                    slope,
                    residual,
                });
            }
            let (t1, l1) = samples[0];
            let (t2, l2) = samples[1];
            let (f1, f2) = (l1 / t1.powf(nu), l2 / t2.powf(nu));
            let leading = (t2 * f1 - t1 * f2) / (t2 - t1);
            let kind = if nu == 0.0 {
                if leading <= 10.0 * self.tol.rank {
                    return Err(Error::UnresolvedBranch {
                        parity,
                        index: j,
                        slope,
                        residual,
                    });
                }
                BranchKind::Nonvanishing
            } else {
                BranchKind::Unstable
            };
            out.push(EigenBranch {
                parity,
                index: j,
                kind,
                nu: (nu > 0.0).then_some(nu as u32),
                leading: Some(leading),
                slope: Some(slope),
                samples,
            });
        }
        Ok(out)
    }

    /// Both parities' branches in one pass over the grid.
    pub fn all_branches(&self, grid: &TGrid) -> Result<[Vec<EigenBranch>; 2]> {
        grid.check_germ_ready()?;
        let spectra: Vec<[Vec<f64>; 2]> = grid.points().par_iter().map(|&t| self.q_spectra(t)).collect();
        let even: Vec<Vec<f64>> = spectra.iter().map(|s| s[0].clone()).collect();
        let odd: Vec<Vec<f64>> = spectra.iter().map(|s| s[1].clone()).collect();
        Ok([self.branches_from(grid, 0, &even)?, self.branches_from(grid, 1, &odd)?])
    }

    pub fn classify(&self, grid: &TGrid) -> Result<GermSummary> {
        let branches = self.all_branches(grid)?;
        let chi0 = self.chi0(grid)?.chi0;
        Ok(summarize(&branches, chi0))
    }

    /// χ'₀ by linear Richardson extrapolation of Str(N P_t) from the two
    /// smallest grid points, with an order check by halving a moderate t.
    pub fn chi0(&self, grid: &TGrid) -> Result<Chi0Estimate> {
        let ts = grid.points();
        if ts.len() < 2 {
            return Err(Error::Grid("need two grid points to extrapolate".into()));
        }
        let (t1, t2) = (ts[0], ts[1]);
        let (s1, s2) = (self.str_np(t1)?, self.str_np(t2)?);
        let extrapolated = (t2 * s1 - t1 * s2) / (t2 - t1);
        let chi0 = extrapolated.round();
        let residual = (extrapolated - chi0).abs();
        if !extrapolated.is_finite() || residual >= GRADING {
            return Err(Error::GradingExtrapolation {
                value: extrapolated,
                residual,
            });
        }
        let order_t = 1e-3_f64.max(t1 * 2.0).min(0.5);
        let e1 = (self.str_np(order_t)? - chi0).abs();
        let e2 = (self.str_np(order_t / 2.0)? - chi0).abs();
        let order = if e1 < EXACT_GRADING {
            None
        } else {
            Some((e1 / e2).log2())
        };
        Ok(Chi0Estimate {
            chi0: chi0 as i64,
            extrapolated,
            residual,
            order,
            order_t,
        })
    }

    /// log Γ = −∫₀¹ (Str(N P_s) − χ'₀) ds/s: trapezoid in log s over the grid
    /// (each interval split `refine` times) plus a linear-decay tail on [0, t_min].
    pub fn gamma_defect(&self, grid: &TGrid, refine: usize) -> Result<GammaReport> {
        let chi0 = self.chi0(grid)?.chi0;
        let refine = refine.max(1);
        let ts = grid.points();
        let mut nodes = vec![ts[0]];
        for w in ts.windows(2) {
            let (a, b) = (w[0].ln(), w[1].ln());
            for k in 1..=refine {
                nodes.push((a + (b - a) * k as f64 / refine as f64).exp());
            }
        }
        let values: Vec<f64> = nodes
            .par_iter()
            .map(|&s| self.str_np(s).map(|v| v - chi0 as f64))
            .collect::<Result<_>>()?;
        let mut integral = 0.0;
        for i in 1..nodes.len() {
            integral += 0.5 * (values[i] + values[i - 1]) * (nodes[i].ln() - nodes[i - 1].ln());
        }
        let tail = values[0];
        let probe = values.iter().take(nodes.len() / 4 + 1).fold(0.0_f64, |m, v| m.max(v.abs()));
        let warning = (tail.abs() > 1e-3 && tail.abs() >= 0.5 * probe)
            .then(|| "Str(N P_s) not converging; model may violate assumptions".to_string());
        Ok(GammaReport {
            log_gamma: -(integral + tail),
            chi0,
            tail,
            integrand: nodes.into_iter().zip(values).collect(),
            warning,
        })
    }

    /// Central-difference check of d/dt log sdet'(Q_t) = (Str(N P_t) − χ'_fin(d_H) − S)/t.
    pub fn variation_residual(&self, t: f64, h: f64) -> Result<VariationReport> {
        if !(h > 0.0 && t - h > 0.0 && t + h <= 1.0) {
            return Err(Error::Invalid(format!("variation needs 0 < t−h and t+h ≤ 1 (t={t}, h={h})")));
        }
        let guarded = |s: f64| -> Result<f64> {
            let spec = self.q_spectra_f64(s);
            sdet_from_spectra(&spec, self.tol.rank, "Q_t").map(|sd| sd.log)
        };
        let derivative = (guarded(t + h)? - guarded(t - h)?) / (2.0 * h);
        let chi_h = self.twisted_sdet()?.chi as f64;
        let index_term = self.space().str_grading();
        let predicted = (self.str_np(t)? - chi_h - index_term) / t;
        Ok(VariationReport {
            t,
            h,
            derivative,
            predicted,
            index_term,
            residual: (derivative - predicted).abs(),
        })
    }

    /// Small-t law log sdet'(Q_t) ≈ (α₀̄ − α₁̄) log t + log(θ₀̄/θ₁̄) + log sdet'(d*d).
    pub fn germ_law(&self, grid: &TGrid, summary: &GermSummary) -> Result<GermLawReport> {
        let ts = grid.points();
        let count = ts.len().min(5);
        let ls: Vec<f64> = ts[..count].par_iter().map(|&t| self.log_sdet_q(t)).collect();
        let fitted_exponent = (ls[1] - ls[0]) / (ts[1].ln() - ts[0].ln());
        let exponent = fitted_exponent.round() as i64;
        let base = self.base_sdet()?.log;
        let a = summary.alpha_difference();
        let expected_intercept = summary.log_theta_ratio() + base;
        let residuals: Vec<(f64, f64)> = ts[..count]
            .iter()
            .zip(&ls)
            .map(|(&t, &l)| (t, (l - (a as f64 * t.ln() + expected_intercept)).abs()))
            .collect();
        let monotone = residuals.windows(2).all(|w| w[0].1 <= w[1].1 || w[0].1.max(w[1].1) < MONOTONE_FLOOR);
        Ok(GermLawReport {
            fitted_exponent,
            exponent,
            branch_exponent: a,
            intercept: ls[0] - a as f64 * ts[0].ln(),
            expected_intercept,
            residuals,
            monotone,
        })
    }
}

/// Reorders each spectrum so that column j follows one analytic branch.
///
/// The stable block (first `z` values) keeps its order. Above it, branches
/// are matched between adjacent points by minimal total |log λ − log λ̂|,
/// where λ̂ extrapolates each branch along its last log-log secant. For this
/// one-dimensional cost the optimum pairs predictions and values by rank.
fn match_branches(ts: &[f64], spectra: &[Vec<f64>], z: usize) -> Vec<Vec<f64>> {
    let log = |v: f64| v.max(f64::MIN_POSITIVE).ln();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(spectra.len());
    for (k, s) in spectra.iter().enumerate() {
        if k == 0 || s.len() <= z + 1 {
            out.push(s.clone());
            continue;
        }
        let prev = &out[k - 1];
        let predicted: Vec<f64> = (z..s.len())
            .map(|j| {
                let here = log(prev[j]);
                if k < 2 {
                    return here;
                }
                let slope = (here - log(out[k - 2][j])) / (ts[k - 1].ln() - ts[k - 2].ln());
                here + slope * (ts[k].ln() - ts[k - 1].ln())
            })
            .collect();
        let mut order: Vec<usize> = (0..predicted.len()).collect();
        order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
        let mut values: Vec<f64> = s[z..].to_vec();
        values.sort_by(f64::total_cmp);
        let mut row = s.clone();
        for (rank, &branch) in order.iter().enumerate() {
            row[z + branch] = values[rank];
        }
        out.push(row);
    }
    out
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// α, θ and branch counts from classified branches.
pub fn summarize(branches: &[Vec<EigenBranch>; 2], chi0: i64) -> GermSummary {
    let mut s = GermSummary {
        alpha: [0, 0],
        log_theta: [0.0, 0.0],
        stable: [0, 0],
        unstable: [0, 0],
        nonvanishing: [0, 0],
        chi0,
    };
    for (p, bs) in branches.iter().enumerate() {
        for b in bs {
            match b.kind {
                BranchKind::Stable => s.stable[p] += 1,
                BranchKind::Nonvanishing => s.nonvanishing[p] += 1,
                BranchKind::Unstable => {
                    s.unstable[p] += 1;
                    s.alpha[p] += b.nu.unwrap_or(0);
                    s.log_theta[p] += b.leading.unwrap_or(f64::NAN).ln();
                }
            }
        }
    }
    s
}

/// Diagonal test family with even Q_t spectrum {0, 3t², 5t⁴, 7}.
///
/// Degree 0 holds z, u₃, u₅, v; u₃ ↦ √3 in degree 3 (i = 1), u₅ ↦ √5 in
/// degree 5 (i = 2), v ↦ √7 in degree 1.
pub fn diagonal_family() -> Result<DeformationFamily> {
    let space = GradedSpace::from_dims(&[4, 1, 0, 1, 0, 1])?;
    let n = space.dim();
    let (w1, w3, w5) = (4, 5, 6);
    let mut d = Mat::zeros(n, n);
    d[(w1, 3)] = 7f64.sqrt();
    let mut h3 = Mat::zeros(n, n);
    h3[(w3, 1)] = 3f64.sqrt();
    let mut h5 = Mat::zeros(n, n);
    h5[(w5, 2)] = 5f64.sqrt();
    let tol = Tolerances::default();
    let base = GradedComplex::new(space.clone(), d, GradingMode::Z, &tol)?;
    let metric = MetricStructure::identity(&space);
    DeformationFamily::new("diag", base, vec![(1, h3), (2, h5)], metric, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{build_su2, build_torus, FluxForm};

    fn t3(lambda: f64) -> DeformationFamily {
        let m = build_torus(3).unwrap();
        let h = FluxForm::volume(&m, lambda).unwrap();
        DeformationFamily::from_exterior(&m, &h, MetricStructure::identity(&m.space()), Tolerances::default()).unwrap()
    }

    #[test]
    fn endpoints() {
        let f = t3(2.0);
        assert_eq!(f.evaluate(0.0), *f.base().differential());
        let m = build_torus(3).unwrap();
        let c = crate::exterior::twisted_complex(&m, &FluxForm::volume(&m, 2.0).unwrap()).unwrap();
        assert_eq!(f.evaluate(1.0), *c.differential());
        assert_eq!(f.scaling_identity_residual(1.0).unwrap(), 0.0);
        assert!(f.scaling_identity_residual(0.25).unwrap() < 1e-13);
        assert!(f.scaling_identity_residual(0.0).is_err());
    }

    #[test]
    fn diagonal_family_germs() {
        let f = diagonal_family().unwrap();
        let grid = TGrid::default();
        let b = f.track_branches(&grid, 0).unwrap();
        let kinds: Vec<_> = b.iter().map(|x| (x.kind, x.nu)).collect();
        assert_eq!(
            kinds,
            vec![
                (BranchKind::Stable, None),
                (BranchKind::Unstable, Some(4)),
                (BranchKind::Unstable, Some(2)),
                (BranchKind::Nonvanishing, None)
            ]
        );
        assert!((b[1].leading.unwrap() - 5.0).abs() < 1e-9);
        assert!((b[2].leading.unwrap() - 3.0).abs() < 1e-9);
        assert!((b[3].leading.unwrap() - 7.0).abs() < 1e-9);
        // 3t² and 5t⁴ cross near t = 0.77; labels must follow the analytic branches
        for &(t, v) in &b[2].samples {
            assert!((v - 3.0 * t * t).abs() <= 1e-9 * 3.0 * t * t, "t={t}: {v}");
        }
        let s = f.classify(&grid).unwrap();
        assert_eq!(s.alpha, [6, 0]);
        assert!((s.log_theta[0] - 15f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn t3_branches_and_grading() {
        let f = t3(2.0);
        let grid = TGrid::default();
        let even = f.track_branches(&grid, 0).unwrap();
        let unstable: Vec<_> = even.iter().filter(|b| b.kind == BranchKind::Unstable).collect();
        assert_eq!(unstable.len(), 1);
        assert_eq!(unstable[0].nu, Some(2));
        assert!((unstable[0].leading.unwrap() - 4.0).abs() < 1e-9);
        let odd = f.track_branches(&grid, 1).unwrap();
        assert!(odd.iter().all(|b| b.kind == BranchKind::Stable));
        assert!((f.str_np(0.5).unwrap() - 3.0).abs() < 1e-12);
        let s = f.classify(&grid).unwrap();
        assert_eq!((s.alpha, s.chi0), ([2, 0], 3));
        let g = f.gamma_defect(&grid, 1).unwrap();
        assert!(g.log_gamma.abs() < 1e-12);
    }

    #[test]
    fn t3_variation_closed_form() {
        let f = t3(2.0);
        let v = f.variation_residual(0.5, 1e-4 * 0.5).unwrap();
        assert!((v.derivative - 4.0).abs() < 1e-6);
        assert!(v.residual < 1e-6);
    }

    #[test]
    fn su2_germs() {
        let m = build_su2();
        let h = FluxForm::volume(&m, 2.0).unwrap();
        let f = DeformationFamily::from_exterior(&m, &h, MetricStructure::identity(&m.space()), Tolerances::default()).unwrap();
        let s = f.classify(&TGrid::default()).unwrap();
        assert_eq!((s.alpha, s.chi0), ([2, 0], 0));
        assert!((s.log_theta[0] - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn scaled_metric_matches_family_spectrum() {
        use rand::SeedableRng;
        let m = build_torus(5).unwrap();
        let h = FluxForm::random_closed(&m, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3)).unwrap();
        let f = DeformationFamily::from_exterior(&m, &h, MetricStructure::identity(&m.space()), Tolerances::default()).unwrap();
        let dh = f.evaluate(1.0);
        for t in [0.1, 0.5] {
            let g = f.metric().scaled(f.space(), t);
            let lhs = crate::hodge::dstar_d_spectra(&dh, f.space(), &g);
            let rhs = f.q_spectra(t);
            for p in 0..2 {
                assert_eq!(lhs[p].len(), rhs[p].len());
                for (a, b) in lhs[p].iter().zip(&rhs[p]) {
                    assert!((a - t * b).abs() < 1e-12 * lhs[p].last().unwrap(), "t={t}: {a} vs {}", t * b);
                }
            }
        }
    }

    #[test]
    fn short_grid_rejected() {
        let f = t3(2.0);
        let g = TGrid::parse("geom:1e-3:1:10").unwrap();
        assert!(matches!(f.track_branches(&g, 0), Err(Error::Grid(_))));
    }
}
