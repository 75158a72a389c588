use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use fluxtorsion::deformation::GermSummary;
use fluxtorsion::torsion::{
    derived_euler, farber_residual, gauge_invariance_check, h0_consistency, main_theorem, metric_independence_check,
    random_even_form, volume_form_example,
};
use fluxtorsion::tolerance::bounds;

use crate::config::{CliResult, Setup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    MainTheorem,
    DerivedEuler,
    VolumeForm,
    Gamma,
    Farber,
    Gauge,
    MetricIndependence,
    All,
}

impl Suite {
    pub fn expand(self) -> Vec<Suite> {
        use Suite::*;
        match self {
            All => vec![MainTheorem, DerivedEuler, VolumeForm, Gamma, Farber, Gauge, MetricIndependence],
            s => vec![s],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::MainTheorem => "main-theorem",
            Suite::DerivedEuler => "derived-euler",
            Suite::VolumeForm => "volume-form",
            Suite::Gamma => "gamma",
            Suite::Farber => "farber",
            Suite::Gauge => "gauge",
            Suite::MetricIndependence => "metric-independence",
            Suite::All => "all",
        }
    }
}

/// One asserted quantity and its bound (value ≤ bound passes; integers use bound 0).
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value.is_finite() && value < bound,
        }
    }

    fn exact(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            bound: 0.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: &'static str,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub checks: Vec<Check>,
    pub details: Value,
}

impl SuiteOutcome {
    fn new(suite: Suite, checks: Vec<Check>, details: Value) -> Self {
        Self {
            suite: suite.name(),
            passed: checks.iter().all(|c| c.passed),
            skipped: None,
            checks,
            details,
        }
    }

    fn skipped(suite: Suite, why: &str) -> Self {
        Self {
            suite: suite.name(),
            passed: true,
            skipped: Some(why.into()),
            checks: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn first_violation(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Number of random seeds for the gauge and metric suites.
const SEEDS: u64 = 5;

fn fail(s: &Setup, suite: Suite, e: fluxtorsion::Error) -> String {
    format!("{} on model {} (flux {}): {e}", suite.name(), s.model_name(), s.flux_desc)
}

/// Lazily computed germ summary shared by the suites that need it.
struct Cache<'a> {
    setup: &'a Setup,
    summary: Option<GermSummary>,
}

impl Cache<'_> {
    fn summary(&mut self, suite: Suite) -> CliResult<&GermSummary> {
        if self.summary.is_none() {
            let s = self.setup.family.classify(&self.setup.grid).map_err(|e| fail(self.setup, suite, e))?;
            self.summary = Some(s);
        }
        Ok(self.summary.as_ref().expect("just filled"))
    }
}

pub fn run(setup: &Setup, suite: Suite) -> CliResult<Vec<SuiteOutcome>> {
    let mut cache = Cache { setup, summary: None };
    suite.expand().into_iter().map(|s| run_one(&mut cache, s, suite == Suite::All)).collect()
}

fn run_one(cache: &mut Cache, suite: Suite, in_all: bool) -> CliResult<SuiteOutcome> {
    let s = cache.setup;
    let fam = &s.family;
    let err = |e| fail(s, suite, e);
    Ok(match suite {
        Suite::MainTheorem => {
            let m = main_theorem(fam).map_err(err)?;
            let mut checks = vec![Check::below("main theorem residual", m.residual, bounds::MAIN_THEOREM)];
            if fam.flux_terms().is_empty() || fam.flux_terms().iter().all(|(_, h)| h.amax() == 0.0) {
                let h0 = h0_consistency(fam.base(), fam.metric(), &s.tol).map_err(err)?;
                checks.push(Check::below("H=0 consistency", h0, bounds::H0_CONSISTENCY));
            }
            SuiteOutcome::new(suite, checks, serde_json::to_value(&m).unwrap_or(Value::Null))
        }
        Suite::DerivedEuler => {
            let summary = cache.summary(suite)?.clone();
            let d = derived_euler(fam, &summary).map_err(err)?;
            let mut checks = vec![Check::exact("chi'(d_H) = chi'_0 - alpha_even + alpha_odd", d.holds())];
            let mut details = json!({ "derived_euler": d });
            if let Some(model) = s.exterior() {
                let chi_d = fam.base_sdet().map_err(err)?.chi;
                let betti = fluxtorsion::cohomology_dims(&model.complex(), &s.tol)
                    .map_err(err)?
                    .degree
                    .unwrap_or_default();
                let (graded, poincare) = fluxtorsion::torsion::poincare_identity(&betti);
                checks.push(Check::exact("chi' = -p'(-1)", graded == poincare));
                let is_volume = s.flux_desc.starts_with("vol:");
                if is_volume && model.top_degree() % 2 == 1 {
                    let b0 = betti.first().copied().unwrap_or(0) as i64;
                    checks.push(Check::exact("chi'(d_H) = chi'(d) + b0", d.chi_twisted == chi_d + b0));
                }
                details["chi_untwisted"] = json!(chi_d);
                details["betti"] = json!(betti);
            }
            SuiteOutcome::new(suite, checks, details)
        }
        Suite::VolumeForm => {
            let Some(model) = s.exterior() else {
                return Ok(SuiteOutcome::skipped(suite, "needs an exterior model"));
            };
            if in_all && !(s.flux_desc.starts_with("vol:") && model.top_degree() % 2 == 1) {
                return Ok(SuiteOutcome::skipped(suite, "needs a volume flux on an odd-dimensional model"));
            }
            let lambda = s
                .flux_desc
                .strip_prefix("vol:")
                .and_then(|l| l.parse().ok())
                .unwrap_or(1.0);
            let v = volume_form_example(model, lambda, &s.grid).map_err(err)?;
            let checks = vec![
                Check::below("volume ratio relative error", v.ratio_error(), bounds::VOLUME_RATIO),
                Check::exact("volume-form companion identities", v.holds(bounds::VOLUME_RATIO)),
            ];
            SuiteOutcome::new(suite, checks, serde_json::to_value(&v).unwrap_or(Value::Null))
        }
        Suite::Gamma => {
            let g = fam.gamma_defect(&s.grid, 1).map_err(err)?;
            let checks = vec![Check::below("|log Gamma|", g.log_gamma.abs(), bounds::GAMMA)];
            SuiteOutcome::new(
                suite,
                checks,
                json!({ "log_gamma": g.log_gamma, "chi0": g.chi0, "tail": g.tail, "warning": g.warning }),
            )
        }
        Suite::Farber => {
            let summary = cache.summary(suite)?.clone();
            let kappa = fluxtorsion::spectral::FilteredComplex::from_family(fam)
                .and_then(|f| f.build_pages())
                .and_then(|ss| ss.kappa(2))
                .map_err(err)?;
            let r = farber_residual(&kappa, &summary);
            let checks = vec![Check::below("log kappa + 1/2 log(theta_even/theta_odd)", r, bounds::FARBER)];
            SuiteOutcome::new(
                suite,
                checks,
                json!({ "kappa_pages": kappa.log_pages, "log_theta": summary.log_theta, "residual": r }),
            )
        }
        Suite::Gauge => {
            let (Some(model), Some(flux)) = (s.exterior(), s.flux.as_ref()) else {
                return Ok(SuiteOutcome::skipped(suite, "needs an exterior model"));
            };
            let mut checks = Vec::new();
            let mut runs = Vec::new();
            for k in 0..SEEDS {
                let seed = s.seed + k;
                let b = random_even_form(model, seed);
                let g = gauge_invariance_check(model, flux, &b).map_err(err)?;
                checks.push(Check::below(format!("gauge residual (B seed {seed})"), g.residual, bounds::GAUGE));
                checks.push(Check::below(
                    format!("conjugation exp(-B) d_H exp(B) = d_(H+dB) (B seed {seed})"),
                    g.conjugation_residual,
                    bounds::GAUGE,
                ));
                runs.push(json!({ "seed": seed, "report": g }));
            }
            SuiteOutcome::new(suite, checks, Value::Array(runs))
        }
        Suite::MetricIndependence => {
            let (Some(model), Some(flux)) = (s.exterior(), s.flux.as_ref()) else {
                return Ok(SuiteOutcome::skipped(suite, "needs an exterior model"));
            };
            let seeds: Vec<u64> = (0..SEEDS).map(|k| s.seed + 1 + k).collect();
            let uni = metric_independence_check(model, flux, &seeds, true).map_err(err)?;
            let gen = metric_independence_check(model, flux, &seeds, false).map_err(err)?;
            let checks = vec![
                Check::below("metric deviation (unimodular Grams)", uni.max_deviation, bounds::METRIC_INDEPENDENCE),
                Check::below("metric deviation after volume shift (general Grams)", gen.max_deviation, bounds::METRIC_INDEPENDENCE),
                Check::below(
                    "main theorem residual under random metrics",
                    uni.max_main_theorem_residual.max(gen.max_main_theorem_residual),
                    bounds::MAIN_THEOREM,
                ),
            ];
            SuiteOutcome::new(suite, checks, json!({ "unimodular": uni, "general": gen }))
        }
        Suite::All => unreachable!("expanded"),
    })
}
