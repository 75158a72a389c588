use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::ExteriorModel;
use crate::error::{Error, Result};
use crate::graded::{GradedComplex, GradingMode};
use crate::linalg::{null_space, submatrix, Mat, Vector};
use crate::tolerance::Tolerances;

/// Closed odd form H = Σ H_{2i+1}, components of degree ≥ 3.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxForm {
    components: BTreeMap<usize, Vector>,
}

impl FluxForm {
    pub fn zero() -> Self {
        Self {
            components: BTreeMap::new(),
        }
    }

    /// Validates degrees and closedness against the model.
    pub fn new(model: &ExteriorModel, components: BTreeMap<usize, Vector>) -> Result<Self> {
        let deg = model.degrees();
        for (&k, v) in &components {
            if k < 3 || k % 2 == 0 {
                return Err(Error::Invalid("flux components must have odd degree ≥ 3".into()));
            }
            if v.len() != model.dim() {
                return Err(Error::Shape(format!("flux component has length {}, model has {}", v.len(), model.dim())));
            }
            if v.iter().zip(&deg).any(|(c, &d)| *c != 0.0 && d != k) {
                return Err(Error::Invalid(format!("degree-{k} flux component has entries of other degrees")));
            }
            let res = (model.d() * v).amax();
            if res > 1e-12 * v.amax().max(1.0) {
                return Err(Error::NotClosed { residual: res });
            }
        }
        let components = components.into_iter().filter(|(_, v)| v.amax() > 0.0).collect();
        Ok(Self { components })
    }

    /// λ times the top monomial.
    pub fn volume(model: &ExteriorModel, lambda: f64) -> Result<Self> {
        let n = model.top_degree();
        if n % 2 == 0 {
            return Err(Error::Invalid(format!("even top degree rejected (model {} has top degree {n})", model.name())));
        }
        if n < 3 {
            return Err(Error::Invalid(format!("volume flux needs top degree ≥ 3 (model {} has {n})", model.name())));
        }
        let v = model.monomial_vector(&model.top_monomial(), lambda);
        Self::new(model, BTreeMap::from([(n, v)]))
    }

    /// Gaussian element of ker d in every odd degree 3..=n, drawn in an
    /// orthonormal basis of the closed forms.
    pub fn random_closed<R: Rng>(model: &ExteriorModel, rng: &mut R) -> Result<Self> {
        let mut comps = BTreeMap::new();
        let n = model.top_degree();
        let mut k = 3;
        while k <= n {
            comps.insert(k, random_closed_form(model, k, rng)?);
            k += 2;
        }
        Self::new(model, comps)
    }

    pub fn components(&self) -> &BTreeMap<usize, Vector> {
        &self.components
    }

    pub fn component(&self, k: usize) -> Option<&Vector> {
        self.components.get(&k)
    }

    pub fn is_zero(&self) -> bool {
        self.components.is_empty()
    }

    /// H as a single coefficient vector.
    pub fn total(&self, model: &ExteriorModel) -> Vector {
        let mut v = Vector::zeros(model.dim());
        for c in self.components.values() {
            v += c;
        }
        v
    }

    /// Euclidean norm of H in the monomial basis.
    pub fn norm(&self, model: &ExteriorModel) -> f64 {
        self.total(model).norm()
    }

    /// H + other (componentwise).
    pub fn plus(&self, model: &ExteriorModel, other: &BTreeMap<usize, Vector>) -> Result<Self> {
        let mut comps = self.components.clone();
        for (k, v) in other {
            *comps.entry(*k).or_insert_with(|| Vector::zeros(model.dim())) += v;
        }
        Self::new(model, comps)
    }

    pub fn describe(&self, model: &ExteriorModel) -> String {
        if self.is_zero() {
            return "0".into();
        }
        self.components
            .iter()
            .map(|(k, v)| format!("H{k}(|{:.4}|)", v.norm()))
            .chain(std::iter::once(format!("on {}", model.name())))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Gaussian combination of an orthonormal basis of closed degree-k forms.
pub fn random_closed_form<R: Rng>(model: &ExteriorModel, k: usize, rng: &mut R) -> Result<Vector> {
    let deg = model.degrees();
    let ix: Vec<usize> = (0..model.dim()).filter(|&i| deg[i] == k).collect();
    let ox: Vec<usize> = (0..model.dim()).filter(|&i| deg[i] == k + 1).collect();
    let basis = if ox.is_empty() {
        Mat::identity(ix.len(), ix.len())
    } else {
        null_space(&submatrix(model.d(), &ox, &ix), 1e-10, "closed forms")?
    };
    let coeffs = Vector::from_fn(basis.ncols(), |_, _| StandardNormal.sample(rng));
    let local = basis * coeffs;
    let mut v = Vector::zeros(model.dim());
    for (r, &i) in ix.iter().enumerate() {
        v[i] = local[r];
    }
    Ok(v)
}

/// Gaussian form of degree k (not necessarily closed).
pub fn random_form<R: Rng>(model: &ExteriorModel, k: usize, rng: &mut R) -> Vector {
    let deg = model.degrees();
    Vector::from_fn(model.dim(), |i, _| {
        if deg[i] == k {
            StandardNormal.sample(rng)
        } else {
            0.0
        }
    })
}

/// d_H = d + H∧ as a ℤ₂-graded complex.
pub fn twisted_complex(model: &ExteriorModel, flux: &FluxForm) -> Result<GradedComplex> {
    let dh = model.d() + model.wedge_operator(&flux.total(model));
    let c = GradedComplex::new_unchecked(model.space(), dh, GradingMode::Z2)?;
    let res = c.square_residual();
    let bound = Tolerances::default().flat * crate::linalg::op_norm(c.differential()).max(1.0).powi(2);
    if res >= bound {
        return Err(Error::NotClosed { residual: res });
    }
    Ok(c)
}

/// exp(B∧) for an even form B without degree-0 part (finite series).
pub fn wedge_exponential(model: &ExteriorModel, b: &Vector) -> Result<Mat> {
    let deg = model.degrees();
    if b.iter().zip(&deg).any(|(c, &d)| *c != 0.0 && (d % 2 == 1 || d == 0)) {
        return Err(Error::Invalid("gauge form must be even with no degree-0 part".into()));
    }
    let w = model.wedge_operator(b);
    let n = model.dim();
    let mut out = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for k in 1..=model.top_degree() {
        term = &term * &w / k as f64;
        if term.amax() == 0.0 {
            break;
        }
        out += &term;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::model::{build_su2, build_torus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn even_degree_rejected() {
        let m = build_torus(3).unwrap();
        let v = m.monomial_vector(&[0, 1], 1.0);
        let err = FluxForm::new(&m, BTreeMap::from([(2, v)])).unwrap_err();
        assert_eq!(err.to_string(), "invalid input: flux components must have odd degree ≥ 3");
    }

    #[test]
    fn t3_volume_twist() {
        let m = build_torus(3).unwrap();
        let c = twisted_complex(&m, &FluxForm::volume(&m, 2.0).unwrap()).unwrap();
        assert_eq!(c.differential()[(7, 0)], 2.0);
        assert_eq!(c.square_residual(), 0.0);
    }

    #[test]
    fn su2_volume_twist_squares_to_zero() {
        let m = build_su2();
        let c = twisted_complex(&m, &FluxForm::volume(&m, 2.0).unwrap()).unwrap();
        assert!(c.square_residual() < 1e-15);
    }

    #[test]
    fn random_closed_is_closed() {
        let m = crate::exterior::model::build_su2_t2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = FluxForm::random_closed(&m, &mut rng).unwrap();
        assert!((m.d() * h.total(&m)).amax() < 1e-12);
        assert!(h.component(3).is_some() && h.component(5).is_some());
    }

    #[test]
    fn zero_flux_gives_untwisted() {
        let m = build_su2();
        let c = twisted_complex(&m, &FluxForm::zero()).unwrap();
        assert_eq!(c.differential(), m.d());
    }
}
