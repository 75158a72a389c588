//! Determinant-line metrics and the comparison theorems.
//!
//! Conventions, recorded in every report:
//! * log ρ = −½ Σ_k k(−1)^k log det'(Δ_k), which equals ½ log sdet'(d*d);
//!   this is the sign under which the ℤ-graded and ℤ₂-graded formulas agree
//!   for untwisted complexes.
//! * det H = det H⁻ ⊗ (det H⁺)^{-1}: a basis volume contributes with
//!   exponent +1 from odd classes and −1 from even classes.
//! * κ: det H(d) → det H(d_H) is the product of −½ log sdet'(∂_r*∂_r) over
//!   pages r ≥ 2 and the volume distortion of lifting E_∞ to d_H-cocycles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deformation::{DeformationFamily, GermSummary, TGrid};
use crate::error::{Error, Result};
use crate::exterior::{twisted_complex, wedge_exponential, ExteriorModel, FluxForm};
use crate::graded::{GradedComplex, GradingMode};
use crate::hodge::{cohomology_dims, graded_euler, hodge, poincare_derivative_at_minus_one, sdet_dstar_d};
use crate::linalg::{log_abs_det, log_det_prime_below, max_abs, sym_eigen, zero_threshold, Mat, Vector};
use crate::metric::MetricStructure;
use crate::spectral::{FilteredComplex, Kappa};
use crate::tolerance::Tolerances;

pub const RHO_CONVENTION: &str = "log rho = -1/2 sum_k k(-1)^k log det'(Delta_k) = +1/2 log sdet'(d*d)";
pub const DET_LINE_CONVENTION: &str = "det H = det H^odd (x) (det H^even)^-1";
pub const PAGE_CONVENTION: &str = "page r carries the filtration-shift-r differential; E_2 = H(d)";
pub const SCALED_METRIC_CONVENTION: &str = "g_t scales the degree-k Gram by t^k";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub rho: String,
    pub det_line: String,
    pub page_index: String,
    pub scaled_metric: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            rho: RHO_CONVENTION.into(),
            det_line: DET_LINE_CONVENTION.into(),
            page_index: PAGE_CONVENTION.into(),
            scaled_metric: SCALED_METRIC_CONVENTION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsMetric {
    pub log_rho: f64,
    /// log det'(Δ_k) per degree.
    pub log_det_laplacian: Vec<f64>,
}

/// ℤ-graded Ray–Singer prefactor from the degree Laplacians.
pub fn rs_metric(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<RsMetric> {
    if c.mode() != GradingMode::Z {
        return Err(Error::Invalid("Ray–Singer metric needs a ℤ-graded complex".into()));
    }
    let space = c.space();
    let lap = m.frame().to_ortho(&hodge(c, m, tol)?.laplacian);
    let spectra: Vec<Vec<f64>> = (0..=space.top_degree())
        .map(|k| {
            let ix = space.indices_of_degree(k);
            sym_eigen(&crate::linalg::submatrix(&lap, &ix, &ix)).0
        })
        .collect();
    let thr = zero_threshold(&spectra.iter().flatten().copied().collect::<Vec<_>>(), tol.rank);
    let mut log_det_laplacian = Vec::new();
    let mut log_rho = 0.0;
    for (k, s) in spectra.iter().enumerate() {
        let (l, _) = log_det_prime_below(s, thr, "Δ_k")?;
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        log_rho -= 0.5 * k as f64 * sgn * l;
        log_det_laplacian.push(l);
    }
    Ok(RsMetric {
        log_rho,
        log_det_laplacian,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistedMetric {
    /// ½ log sdet'(D*D).
    pub log_prefactor: f64,
    pub chi: i64,
}

/// ℤ₂-graded prefactor ½ log sdet'(D*D); for a ℤ-graded input the grading
/// is forgotten mod 2.
pub fn twisted_metric(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<TwistedMetric> {
    let sd = sdet_dstar_d(c.differential(), c.space(), m, tol)?;
    Ok(TwistedMetric {
        log_prefactor: 0.5 * sd.log,
        chi: sd.chi,
    })
}

/// An element of det H given by cocycle representatives per parity times a
/// scalar: (∧ odd reps) ⊗ (∧ even reps)^{-1} · e^{log_scalar}.
#[derive(Debug, Clone)]
pub struct DetLineElement {
    pub reps: [Mat; 2],
    pub log_scalar: f64,
}

impl DetLineElement {
    /// The unit harmonic volume of (c, m).
    pub fn unit_harmonic(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<Self> {
        let h = hodge(c, m, tol)?;
        Ok(Self {
            reps: h.kernel,
            log_scalar: 0.0,
        })
    }

    /// log of the harmonic-volume norm |·|_{ker Δ} under (c, m).
    pub fn log_harmonic_norm(&self, c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<f64> {
        let h = hodge(c, m, tol)?;
        let frame = m.frame();
        let mut out = self.log_scalar;
        for p in 0..2 {
            let k = h.kernel[p].ncols();
            if self.reps[p].ncols() != k {
                return Err(Error::Shape(format!(
                    "{} representatives of parity {p} for a {k}-dimensional cohomology",
                    self.reps[p].ncols()
                )));
            }
            if k == 0 {
                continue;
            }
            let coords = frame.vecs_to_ortho(&h.kernel[p]).transpose() * frame.vecs_to_ortho(&self.reps[p]);
            let ld = log_abs_det(&coords).ok_or_else(|| Error::Invalid("representatives are not independent in cohomology".into()))?;
            out += if p == 1 { ld } else { -ld };
        }
        Ok(out)
    }
}

/// The torsion element: unit harmonic volume rescaled to norm one.
pub fn torsion_element(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<DetLineElement> {
    let prefactor = if c.mode() == GradingMode::Z {
        rs_metric(c, m, tol)?.log_rho
    } else {
        twisted_metric(c, m, tol)?.log_prefactor
    };
    let mut e = DetLineElement::unit_harmonic(c, m, tol)?;
    e.log_scalar = -prefactor;
    Ok(e)
}

/// log ‖e‖ in the RS (ℤ-graded) or twisted (ℤ₂) metric of (c, m).
pub fn log_norm(e: &DetLineElement, c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<f64> {
    let prefactor = if c.mode() == GradingMode::Z {
        rs_metric(c, m, tol)?.log_rho
    } else {
        twisted_metric(c, m, tol)?.log_prefactor
    };
    Ok(prefactor + e.log_harmonic_norm(c, m, tol)?)
}

/// |RS prefactor − twisted prefactor| on an untwisted ℤ-graded complex.
pub fn h0_consistency(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<f64> {
    let rs = rs_metric(c, m, tol)?;
    let tw = twisted_metric(c, m, tol)?;
    Ok((rs.log_rho - tw.log_prefactor).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTheorem {
    pub log_rs: f64,
    pub kappa: Kappa,
    pub log_twisted: f64,
    pub residual: f64,
}

/// |log ‖σ‖_RS − (log κ + log ‖·‖_H)| for the unit harmonic volume σ of det H(d).
pub fn main_theorem(fam: &DeformationFamily) -> Result<MainTheorem> {
    let tol = fam.tolerances();
    let rs = rs_metric(fam.base(), fam.metric(), tol)?;
    let tw = twisted_metric(&fam.evaluate_complex(1.0)?, fam.metric(), tol)?;
    let kappa = FilteredComplex::from_family(fam)?.build_pages()?.kappa(2)?;
    let residual = (rs.log_rho - (kappa.log_total() + tw.log_prefactor)).abs();
    Ok(MainTheorem {
        log_rs: rs.log_rho,
        kappa,
        log_twisted: tw.log_prefactor,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedEuler {
    pub chi_twisted: i64,
    pub chi0: i64,
    pub alpha: [u32; 2],
    /// χ'₀ − α₀̄ + α₁̄.
    pub predicted: i64,
}

impl DerivedEuler {
    pub fn holds(&self) -> bool {
        self.chi_twisted == self.predicted
    }
}

pub fn derived_euler(fam: &DeformationFamily, summary: &GermSummary) -> Result<DerivedEuler> {
    let chi_twisted = fam.twisted_sdet()?.chi;
    Ok(DerivedEuler {
        chi_twisted,
        chi0: summary.chi0,
        alpha: summary.alpha,
        predicted: summary.chi0 - summary.alpha_difference(),
    })
}

pub fn derived_euler_check(fam: &DeformationFamily, grid: &TGrid) -> Result<DerivedEuler> {
    derived_euler(fam, &fam.classify(grid)?)
}

/// Farber's relation with the page part of κ: log κ_pages + ½ log(θ₀̄/θ₁̄).
pub fn farber_residual(kappa: &Kappa, summary: &GermSummary) -> f64 {
    (kappa.log_pages + 0.5 * summary.log_theta_ratio()).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeFormReport {
    pub model: String,
    pub lambda: f64,
    pub top_degree: usize,
    pub betti: Vec<usize>,
    pub ratio: f64,
    /// ‖H‖^{2b₀}.
    pub expected_ratio: f64,
    pub chi_untwisted: i64,
    /// Σ(−1)^k k b_k.
    pub chi_graded: i64,
    pub chi_twisted: i64,
    /// dim ker Δ_H per parity versus ⊕_{k=1}^{n−1} H^k(d).
    pub harmonic_dims: [usize; 2],
    pub middle_dims: [usize; 2],
    /// Distance between the projectors onto the two harmonic spaces.
    pub harmonic_residual: f64,
    pub unstable: Vec<(u8, u32, f64)>,
}

impl VolumeFormReport {
    pub fn ratio_error(&self) -> f64 {
        (self.ratio / self.expected_ratio - 1.0).abs()
    }

    /// Every claimed identity, checked at the given relative tolerance.
    pub fn holds(&self, rel: f64) -> bool {
        let b0 = self.betti[0];
        let n = self.top_degree as u32;
        let h2 = self.lambda * self.lambda;
        let branches_ok = self.unstable.len() == b0
            && self
                .unstable
                .iter()
                .all(|&(p, nu, lead)| p == 0 && nu == n - 1 && (lead / h2 - 1.0).abs() < 1e-6);
        self.ratio_error() < rel
            && self.chi_twisted == self.chi_untwisted + b0 as i64
            && self.chi_twisted == self.chi_graded + b0 as i64
            && self.harmonic_dims == self.middle_dims
            && self.harmonic_residual < 1e-8
            && branches_ok
    }
}

/// Checks sdet'(d_H*d_H) = ‖H‖^{2b₀} sdet'(d*d) and χ'(d_H) = χ'(d) + b₀ for
/// H = λ·vol, plus the intermediate claims about harmonics and branches.
pub fn volume_form_example(model: &ExteriorModel, lambda: f64, grid: &TGrid) -> Result<VolumeFormReport> {
    let n = model.top_degree();
    if n % 2 == 0 {
        return Err(Error::Invalid(format!("even top degree rejected (model {} has top degree {n})", model.name())));
    }
    let tol = Tolerances::default();
    let flux = FluxForm::volume(model, lambda)?;
    let metric = MetricStructure::identity(&model.space());
    let fam = DeformationFamily::from_exterior(model, &flux, metric.clone(), tol)?;
    let base = fam.base_sdet()?;
    let tw = fam.twisted_sdet()?;
    let betti = cohomology_dims(&model.complex(), &tol)?.degree.expect("ℤ-graded model");
    let b0 = betti[0];
    let norm = flux.norm(model);

    let twisted = twisted_complex(model, &flux)?;
    let ht = hodge(&twisted, &metric, &tol)?;
    let hd = hodge(&model.complex(), &metric, &tol)?;
    let by_deg = hd.kernel_by_degree.expect("ℤ-graded model");
    let mut middle_dims = [0, 0];
    let mut p_mid = Mat::zeros(model.dim(), model.dim());
    for (k, basis) in by_deg.iter().enumerate().take(n).skip(1) {
        middle_dims[k % 2] += basis.ncols();
        p_mid += basis * basis.transpose();
    }
    let harmonic_residual = max_abs(&(&ht.projector - p_mid));

    let summary_branches = fam.all_branches(grid)?;
    let unstable = summary_branches
        .iter()
        .flatten()
        .filter(|b| b.nu.is_some())
        .map(|b| (b.parity, b.nu.unwrap_or(0), b.leading.unwrap_or(f64::NAN)))
        .collect();

    Ok(VolumeFormReport {
        model: model.name().to_string(),
        lambda,
        top_degree: n,
        ratio: (tw.log - base.log).exp(),
        expected_ratio: norm.powi(2 * b0 as i32),
        chi_untwisted: base.chi,
        chi_graded: graded_euler(&betti),
        chi_twisted: tw.chi,
        harmonic_dims: ht.harmonic_dims(),
        middle_dims,
        harmonic_residual,
        betti,
        unstable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    /// ‖exp(−B)∘d_H∘exp(B) − d_{H+dB}‖_max.
    pub conjugation_residual: f64,
    pub log_norm_h: f64,
    pub log_norm_shifted: f64,
    pub residual: f64,
}

/// Compares ‖σ‖_H with ‖exp(−B)σ‖_{H+dB} for the unit harmonic volume σ of
/// det H(d_H), under the orthonormal monomial metric.
pub fn gauge_invariance_check(model: &ExteriorModel, flux: &FluxForm, b: &Vector) -> Result<GaugeReport> {
    let tol = Tolerances::default();
    let metric = MetricStructure::identity(&model.space());
    let x = wedge_exponential(model, b)?;
    let x_inv = wedge_exponential(model, &(-b))?;
    let db = model.d() * b;
    let mut extra = std::collections::BTreeMap::new();
    let deg = model.degrees();
    for (i, &c) in db.iter().enumerate() {
        if c != 0.0 {
            extra.entry(deg[i]).or_insert_with(|| Vector::zeros(model.dim()))[i] = c;
        }
    }
    let shifted = flux.plus(model, &extra)?;
    let c_h = twisted_complex(model, flux)?;
    let c_s = twisted_complex(model, &shifted)?;
    let conjugation_residual = max_abs(&(&x_inv * c_h.differential() * &x - c_s.differential()));

    let sigma = DetLineElement::unit_harmonic(&c_h, &metric, &tol)?;
    let log_norm_h = log_norm(&sigma, &c_h, &metric, &tol)?;
    let image = DetLineElement {
        reps: [&x_inv * &sigma.reps[0], &x_inv * &sigma.reps[1]],
        log_scalar: 0.0,
    };
    let log_norm_shifted = log_norm(&image, &c_s, &metric, &tol)?;
    Ok(GaugeReport {
        conjugation_residual,
        log_norm_h,
        log_norm_shifted,
        residual: (log_norm_h - log_norm_shifted).abs(),
    })
}

/// Random even form of degrees 2, 4, … (no degree-0 part).
pub fn random_even_form(model: &ExteriorModel, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Vector::zeros(model.dim());
    let mut k = 2;
    while k <= model.top_degree() {
        b += crate::exterior::random_form(model, k, &mut rng);
        k += 2;
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRun {
    pub seed: u64,
    pub unimodular: bool,
    pub log_rs: f64,
    pub log_twisted: f64,
    pub main_theorem_residual: f64,
    /// ½(log vol_odd − log vol_even) of the Gram structure.
    pub volume_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricIndependence {
    pub reference: MetricRun,
    pub runs: Vec<MetricRun>,
    /// Largest deviation of the fixed-element values from the reference,
    /// after removing the predicted volume shift.
    pub max_deviation: f64,
    pub max_main_theorem_residual: f64,
}

/// log ‖·‖ of fixed det-line elements of det H(d) and det H(d_H) under
/// random Gram structures. The elements are the unit harmonic volumes of the
/// orthonormal-metric run, carried as fixed cocycles.
pub fn metric_independence_check(
    model: &ExteriorModel,
    flux: &FluxForm,
    seeds: &[u64],
    unimodular: bool,
) -> Result<MetricIndependence> {
    let tol = Tolerances::default();
    let space = model.space();
    let base = model.complex();
    let twisted = twisted_complex(model, flux)?;
    let id = MetricStructure::identity(&space);
    let sigma_d = DetLineElement::unit_harmonic(&base, &id, &tol)?;
    let sigma_h = DetLineElement::unit_harmonic(&twisted, &id, &tol)?;
    let run = |metric: &MetricStructure, seed: u64, uni: bool| -> Result<MetricRun> {
        let fam = DeformationFamily::from_exterior(model, flux, metric.clone(), tol)?;
        Ok(MetricRun {
            seed,
            unimodular: uni,
            log_rs: log_norm(&sigma_d, &base, metric, &tol)?,
            log_twisted: log_norm(&sigma_h, &twisted, metric, &tol)?,
            main_theorem_residual: main_theorem(&fam)?.residual,
            volume_shift: volume_shift(metric, &space),
        })
    };
    let reference = run(&id, 0, true)?;
    let mut runs = Vec::new();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MetricStructure::random(&space, &mut rng, unimodular);
        runs.push(run(&m, seed, unimodular)?);
    }
    let max_deviation = runs
        .iter()
        .map(|r| {
            let a = (r.log_rs - r.volume_shift - reference.log_rs).abs();
            let b = (r.log_twisted - r.volume_shift - reference.log_twisted).abs();
            a.max(b)
        })
        .fold(0.0, f64::max);
    let max_main_theorem_residual = runs.iter().map(|r| r.main_theorem_residual).fold(reference.main_theorem_residual, f64::max);
    Ok(MetricIndependence {
        reference,
        runs,
        max_deviation,
        max_main_theorem_residual,
    })
}

/// ½(Σ_{odd} log det G − Σ_{even} log det G): the change of every
/// det-line norm when only volumes change.
pub fn volume_shift(m: &MetricStructure, space: &crate::graded::GradedSpace) -> f64 {
    0.5 * (m.log_volume(space, 1) - m.log_volume(space, 0))
}

/// (Σ(−1)^k k b_k, −p'(−1)).
pub fn poincare_identity(betti: &[usize]) -> (i64, i64) {
    (graded_euler(betti), -poincare_derivative_at_minus_one(betti))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub main_theorem: f64,
    /// χ'_fin(d_H) − (χ'₀ − α₀̄ + α₁̄), an integer.
    pub derived_euler: i64,
    pub farber_relation: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub model: String,
    pub flux: String,
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
    pub t_grid: (f64, f64, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsionReport {
    pub conventions: Conventions,
    pub metadata: Metadata,
    pub rho: f64,
    pub twisted_prefactor: f64,
    pub kappa: f64,
    pub kappa_pages: f64,
    pub kappa_identification: f64,
    pub chi_fin_d: i64,
    pub chi_fin_h: i64,
    pub chi0: i64,
    pub alpha: [u32; 2],
    pub log_theta: [f64; 2],
    pub residuals: Residuals,
}

impl TorsionReport {
    pub fn is_finite(&self) -> bool {
        [
            self.rho,
            self.twisted_prefactor,
            self.kappa,
            self.kappa_pages,
            self.kappa_identification,
            self.log_theta[0],
            self.log_theta[1],
            self.residuals.main_theorem,
            self.residuals.farber_relation,
            self.residuals.gamma,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Runs every pipeline on one family and gathers the report.
pub fn torsion_report(fam: &DeformationFamily, grid: &TGrid, flux: &str, seed: Option<u64>) -> Result<TorsionReport> {
    let summary = fam.classify(grid)?;
    let main = main_theorem(fam)?;
    let euler = derived_euler(fam, &summary)?;
    let gamma = fam.gamma_defect(grid, 1)?;
    let pts = grid.points();
    Ok(TorsionReport {
        conventions: Conventions::default(),
        metadata: Metadata {
            model: fam.name().to_string(),
            flux: flux.to_string(),
            seed,
            tolerances: *fam.tolerances(),
            t_grid: (pts[0], pts[pts.len() - 1], pts.len()),
        },
        rho: main.log_rs,
        twisted_prefactor: main.log_twisted,
        kappa: main.kappa.log_total(),
        kappa_pages: main.kappa.log_pages,
        kappa_identification: main.kappa.log_identification,
        chi_fin_d: fam.base_sdet()?.chi,
        chi_fin_h: euler.chi_twisted,
        chi0: summary.chi0,
        alpha: summary.alpha,
        log_theta: summary.log_theta,
        residuals: Residuals {
            main_theorem: main.residual,
            derived_euler: euler.chi_twisted - euler.predicted,
            farber_relation: farber_residual(&main.kappa, &summary),
            gamma: gamma.log_gamma,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{build_su2, build_torus};

    #[test]
    fn su2_rho_is_one() {
        let m = build_su2();
        let rs = rs_metric(&m.complex(), &MetricStructure::identity(&m.space()), &Tolerances::default()).unwrap();
        assert!(rs.log_rho.abs() < 1e-14);
    }

    #[test]
    fn t3_twisted_prefactor() {
        let m = build_torus(3).unwrap();
        let c = twisted_complex(&m, &FluxForm::volume(&m, 2.0).unwrap()).unwrap();
        let tw = twisted_metric(&c, &MetricStructure::identity(&m.space()), &Tolerances::default()).unwrap();
        assert!((tw.log_prefactor - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn torsion_element_has_unit_norm() {
        let m = build_su2();
        let c = twisted_complex(&m, &FluxForm::volume(&m, 2.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = MetricStructure::random(&m.space(), &mut rng, false);
        let tol = Tolerances::default();
        let tau = torsion_element(&m.complex(), &g, &tol).unwrap();
        assert!(log_norm(&tau, &m.complex(), &g, &tol).unwrap().abs() < 1e-10);
        let tau = torsion_element(&c, &g, &tol).unwrap();
        assert!(log_norm(&tau, &c, &g, &tol).unwrap().abs() < 1e-10);
    }

    #[test]
    fn even_top_degree_rejected() {
        let m = ExteriorModel::free("t4", (1..=4).map(|i| format!("e{i}")).collect()).unwrap();
        let err = volume_form_example(&m, 1.0, &TGrid::default()).unwrap_err();
        assert!(err.to_string().contains("even top degree rejected"));
    }
}
