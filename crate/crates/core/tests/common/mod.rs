#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fluxtorsion::deformation::DeformationFamily;
use fluxtorsion::exterior::{builtin, ExteriorModel, FluxForm};
use fluxtorsion::superconnection::{random_flat_superconnection, DimsProfile, PairSpec};
use fluxtorsion::{GradedComplex, GradingMode, MetricStructure, Tolerances};

/// The four geometric models of the acceptance grid.
pub const MODELS: [&str; 4] = ["t3", "t5", "su2", "su2xt2"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn model(name: &str) -> ExteriorModel {
    builtin(name).expect("builtin model")
}

pub fn random_flux(m: &ExteriorModel, seed: u64) -> FluxForm {
    FluxForm::random_closed(m, &mut rng(seed)).expect("random closed flux")
}

pub fn family(m: &ExteriorModel, flux: &FluxForm) -> DeformationFamily {
    family_with_metric(m, flux, MetricStructure::identity(&m.space()))
}

pub fn family_with_metric(m: &ExteriorModel, flux: &FluxForm, metric: MetricStructure) -> DeformationFamily {
    DeformationFamily::from_exterior(m, flux, metric, Tolerances::default()).expect("family")
}

/// Volume flux plus the seeded random closed fluxes 1..=5.
pub fn flux_cases(m: &ExteriorModel) -> Vec<(String, FluxForm)> {
    let mut v = vec![("vol:2".to_string(), FluxForm::volume(m, 2.0).expect("volume"))];
    for s in 1..=5 {
        v.push((format!("random:{s}"), random_flux(m, s)));
    }
    v
}

/// Random ℤ-graded complex in degrees 0..=top from a seed.
pub fn random_z_complex(seed: u64, top: usize) -> GradedComplex {
    let mut r = rng(seed);
    use rand::Rng;
    let pairs = (0..r.random_range(1..=4))
        .map(|_| {
            let degree = r.random_range(0..top);
            PairSpec {
                degree,
                parity: (degree % 2) as u8,
                shift: 1,
            }
        })
        .collect();
    let generators = (0..r.random_range(1..=3))
        .map(|_| {
            let d = r.random_range(0..=top);
            (d, (d % 2) as u8)
        })
        .collect();
    let profile = DimsProfile {
        pairs,
        generators,
        mixing: false,
    };
    let scm = random_flat_superconnection(seed, &profile).expect("generator");
    GradedComplex::new(scm.space().clone(), scm.assembled(), GradingMode::Z, &Tolerances::default()).expect("ℤ-graded")
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

/// Sparse flux on su2xt2: four exact degree-3 monomials plus the top form.
/// Str(N P_t) moves with t here, unlike on the volume and random fluxes.
pub fn sparse_su2xt2() -> (ExteriorModel, FluxForm) {
    let m = model("su2xt2");
    let mut h3 = m.monomial_vector(&[], 0.0) * 0.0;
    for label in ["x1^x2^e1", "x1^x2^e1_5", "x1^x3^e1", "x1^x3^e1_5"] {
        let (c, mono) = m.parse_monomial(label).expect("monomial");
        h3 += m.monomial_vector(&mono, c);
    }
    let h5 = m.monomial_vector(&m.top_monomial(), 1.0);
    let flux = FluxForm::new(&m, std::collections::BTreeMap::from([(3, h3), (5, h5)])).expect("closed flux");
    (m, flux)
}
