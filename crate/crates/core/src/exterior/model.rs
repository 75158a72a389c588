use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::graded::{GradedComplex, GradedSpace, GradingMode};
use crate::linalg::{max_abs, Mat, Vector};
use crate::tolerance::{Tolerances, GENERATOR_CAP};

/// Square-free monomial: strictly increasing generator indices.
pub type Monomial = Vec<usize>;

/// Product of two monomials with its Koszul sign, or `None` if they share a
/// generator.
pub fn wedge_monomials(a: &[usize], b: &[usize]) -> Option<(f64, Monomial)> {
    let mut inversions = 0usize;
    for &x in a {
        for &y in b {
            if x == y {
                return None;
            }
            if x > y {
                inversions += 1;
            }
        }
    }
    let mut out: Monomial = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    let s = if inversions % 2 == 0 { 1.0 } else { -1.0 };
    Some((s, out))
}

/// Λ(x₁..x_g) with a derivation differential determined by the images of
/// the generators.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorModel {
    name: String,
    generators: Vec<String>,
    /// d(x_i) as a list of (degree-2 monomial, coefficient).
    d_images: Vec<Vec<(Monomial, f64)>>,
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
    d: Mat,
}

impl ExteriorModel {
    pub fn new(name: &str, generators: Vec<String>, d_images: Vec<Vec<(Monomial, f64)>>) -> Result<Self> {
        let g = generators.len();
        if g == 0 {
            return Err(Error::Invalid("exterior model needs at least one generator".into()));
        }
        if g > GENERATOR_CAP {
            return Err(Error::SizeCap {
                requested: g,
                cap: GENERATOR_CAP,
            });
        }
        if d_images.len() != g {
            return Err(Error::Shape(format!("{} differential images for {g} generators", d_images.len())));
        }
        for (i, img) in d_images.iter().enumerate() {
            for (m, _) in img {
                let sorted = m.windows(2).all(|w| w[0] < w[1]);
                if m.len() != 2 || !sorted || m.iter().any(|&x| x >= g) {
                    return Err(Error::Invalid(format!(
                        "d({}) must be a combination of degree-2 monomials",
                        generators[i]
                    )));
                }
            }
        }
        let mut monomials: Vec<Monomial> = Vec::with_capacity(1 << g);
        for k in 0..=g {
            combinations(g, k, &mut monomials);
        }
        let index = monomials.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let mut model = Self {
            name: name.to_string(),
            generators,
            d_images,
            monomials,
            index,
            d: Mat::zeros(0, 0),
        };
        model.d = model.assemble_d();
        let res = max_abs(&(&model.d * &model.d));
        if res >= 1e-13 {
            return Err(Error::NotSquareZero {
                residual: res,
                bound: 1e-13,
            });
        }
        Ok(model)
    }

    /// Free exterior algebra (zero differential) on labelled generators.
    pub fn free(name: &str, labels: Vec<String>) -> Result<Self> {
        let g = labels.len();
        Self::new(name, labels, vec![Vec::new(); g])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn generators(&self) -> &[String] {
        &self.generators
    }

    pub fn d_images(&self) -> &[Vec<(Monomial, f64)>] {
        &self.d_images
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn dim(&self) -> usize {
        self.monomials.len()
    }

    pub fn top_degree(&self) -> usize {
        self.generators.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let g = self.generators.len();
        (0..=g).map(|k| binomial(g, k)).collect()
    }

    pub fn index_of(&self, m: &[usize]) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.monomials.iter().map(|m| m.len()).collect()
    }

    pub fn monomial_label(&self, m: &[usize]) -> String {
        if m.is_empty() {
            "1".to_string()
        } else {
            m.iter().map(|&i| self.generators[i].as_str()).collect::<Vec<_>>().join("^")
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.monomials.iter().map(|m| self.monomial_label(m)).collect()
    }

    /// Parse a label such as `x1^x3` (or `1`) into a monomial, with the sign
    /// needed to reorder it.
    pub fn parse_monomial(&self, label: &str) -> Result<(f64, Monomial)> {
        let label = label.trim();
        if label == "1" || label.is_empty() {
            return Ok((1.0, Vec::new()));
        }
        let mut acc: (f64, Monomial) = (1.0, Vec::new());
        for part in label.split('^') {
            let i = self
                .generators
                .iter()
                .position(|g| g == part.trim())
                .ok_or_else(|| Error::Invalid(format!("unknown generator '{part}' in monomial '{label}'")))?;
            let (s, m) = wedge_monomials(&acc.1, &[i])
                .ok_or_else(|| Error::Invalid(format!("monomial '{label}' repeats a generator")))?;
            acc = (acc.0 * s, m);
        }
        Ok(acc)
    }

    pub fn space(&self) -> GradedSpace {
        GradedSpace::from_dims(&self.dims())
            .expect("nonempty")
            .with_labels(self.labels())
            .expect("label count")
    }

    /// The structure differential d.
    pub fn d(&self) -> &Mat {
        &self.d
    }

    /// The untwisted ℤ-graded complex (Ω, d).
    pub fn complex(&self) -> GradedComplex {
        GradedComplex::new(self.space(), self.d.clone(), GradingMode::Z, &Tolerances::default())
            .expect("model differential is square-zero and degree one")
    }

    /// Coefficient vector of a single monomial.
    pub fn monomial_vector(&self, m: &[usize], coeff: f64) -> Vector {
        let mut v = Vector::zeros(self.dim());
        v[self.index[m]] = coeff;
        v
    }

    /// The product of all generators.
    pub fn top_monomial(&self) -> Monomial {
        (0..self.generators.len()).collect()
    }

    /// Matrix of left exterior multiplication by the form `f`.
    pub fn wedge_operator(&self, f: &Vector) -> Mat {
        let n = self.dim();
        let mut w = Mat::zeros(n, n);
        for (i, mi) in self.monomials.iter().enumerate() {
            let c = f[i];
            if c == 0.0 {
                continue;
            }
            for (j, mj) in self.monomials.iter().enumerate() {
                if let Some((s, u)) = wedge_monomials(mi, mj) {
                    w[(self.index[&u], j)] += s * c;
                }
            }
        }
        w
    }

    /// f ∧ g as coefficient vectors.
    pub fn wedge(&self, f: &Vector, g: &Vector) -> Vector {
        self.wedge_operator(f) * g
    }

    /// Degree of a homogeneous form, `None` if zero or inhomogeneous.
    pub fn form_degree(&self, f: &Vector) -> Option<usize> {
        let mut deg = None;
        for (i, m) in self.monomials.iter().enumerate() {
            if f[i] != 0.0 {
                match deg {
                    None => deg = Some(m.len()),
                    Some(k) if k != m.len() => return None,
                    _ => {}
                }
            }
        }
        deg
    }

    /// Tensor product algebra with the graded-Leibniz differential.
    pub fn product(&self, other: &ExteriorModel) -> Result<ExteriorModel> {
        let g = self.generators.len() + other.generators.len();
        if g > GENERATOR_CAP {
            return Err(Error::SizeCap {
                requested: g,
                cap: GENERATOR_CAP,
            });
        }
        let off = self.generators.len();
        let mut labels = self.generators.clone();
        for (k, l) in other.generators.iter().enumerate() {
            if labels.contains(l) {
                labels.push(format!("{l}_{}", off + k + 1));
            } else {
                labels.push(l.clone());
            }
        }
        let mut images = self.d_images.clone();
        for img in &other.d_images {
            images.push(img.iter().map(|(m, c)| (m.iter().map(|x| x + off).collect(), *c)).collect());
        }
        let name = format!("{}x{}", self.name, other.name);
        ExteriorModel::new(&name, labels, images)
    }

    fn assemble_d(&self) -> Mat {
        let n = self.dim();
        let mut d = Mat::zeros(n, n);
        for (j, m) in self.monomials.iter().enumerate() {
            for (p, &gen) in m.iter().enumerate() {
                let sign_p = if p % 2 == 0 { 1.0 } else { -1.0 };
                let left = &m[..p];
                let right = &m[p + 1..];
                for (mono, c) in &self.d_images[gen] {
                    let Some((s1, lm)) = wedge_monomials(left, mono) else {
                        continue;
                    };
                    let Some((s2, u)) = wedge_monomials(&lm, right) else {
                        continue;
                    };
                    d[(self.index[&u], j)] += sign_p * s1 * s2 * c;
                }
            }
        }
        d
    }
}

fn combinations(g: usize, k: usize, out: &mut Vec<Monomial>) {
    fn rec(start: usize, g: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Monomial>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..g {
            cur.push(i);
            rec(i + 1, g, k, cur, out);
            cur.pop();
        }
    }
    rec(0, g, k, &mut Vec::new(), out);
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Λ(e₁..e_n), zero differential; n odd and ≥ 3.
pub fn build_torus(n: usize) -> Result<ExteriorModel> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::Invalid(format!(
            "torus dimension must be odd and at least 3 (got {n}); even top degree rejected"
        )));
    }
    ExteriorModel::free(&format!("t{n}"), (1..=n).map(|i| format!("e{i}")).collect())
}

/// The circle factor Λ(e₁).
pub fn circle() -> ExteriorModel {
    ExteriorModel::free("t1", vec!["e1".into()]).expect("one generator")
}

/// Invariant forms on SU(2): dx₁ = x₂x₃, dx₂ = x₃x₁, dx₃ = x₁x₂.
pub fn build_su2() -> ExteriorModel {
    let images = vec![
        vec![(vec![1, 2], 1.0)],
        vec![(vec![0, 2], -1.0)],
        vec![(vec![0, 1], 1.0)],
    ];
    ExteriorModel::new("su2", vec!["x1".into(), "x2".into(), "x3".into()], images).expect("su2 is a valid model")
}

/// su2 ⊗ T¹ ⊗ T¹.
pub fn build_su2_t2() -> ExteriorModel {
    let m = build_su2().product(&circle()).and_then(|m| m.product(&circle())).expect("five generators");
    ExteriorModel { name: "su2xt2".into(), ..m }
}

/// Builtin models by name: t3, t5, su2, su2xt1, su2xt2.
pub fn builtin(name: &str) -> Result<ExteriorModel> {
    match name {
        "su2" => Ok(build_su2()),
        "su2xt1" => build_su2().product(&circle()).map(|m| ExteriorModel { name: "su2xt1".into(), ..m }),
        "su2xt2" => Ok(build_su2_t2()),
        _ => {
            if let Some(n) = name.strip_prefix('t').and_then(|s| s.parse::<usize>().ok()) {
                build_torus(n)
            } else {
                Err(Error::Invalid(format!("unknown builtin model '{name}'")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_dims() {
        assert_eq!(build_torus(3).unwrap().dims(), vec![1, 3, 3, 1]);
        assert_eq!(build_torus(5).unwrap().dims(), vec![1, 5, 10, 10, 5, 1]);
        assert!(build_torus(4).is_err());
        assert_eq!(max_abs(build_torus(3).unwrap().d()), 0.0);
    }

    #[test]
    fn su2_cyclic_cancellation() {
        let m = build_su2();
        // d(x2 x3) = dx2·x3 − x2·dx3 = x3x1x3 − x2x1x2 = 0
        let j = m.index_of(&[1, 2]).unwrap();
        assert!(m.d().column(j).amax() < 1e-15);
        assert!(max_abs(&(m.d() * m.d())) < 1e-15);
        // dx2 = x3 ∧ x1 = −x1 ∧ x3
        let j = m.index_of(&[1]).unwrap();
        assert_eq!(m.d()[(m.index_of(&[0, 2]).unwrap(), j)], -1.0);
    }

    #[test]
    fn wedge_by_top_on_t3() {
        let m = build_torus(3).unwrap();
        let w = m.wedge_operator(&m.monomial_vector(&[0, 1, 2], 1.0));
        assert_eq!(w[(7, 0)], 1.0);
        assert_eq!(max_abs(&w), 1.0);
        assert_eq!(w.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn wedge_anticommutes_on_generators() {
        let m = build_torus(3).unwrap();
        let a = m.wedge_operator(&m.monomial_vector(&[0], 1.0));
        let b = m.wedge_operator(&m.monomial_vector(&[1], 1.0));
        assert_eq!(&a * &b, -(&b * &a));
    }

    #[test]
    fn unit_wedge_is_identity() {
        let m = build_su2();
        assert_eq!(m.wedge_operator(&m.monomial_vector(&[], 1.0)), Mat::identity(8, 8));
    }

    #[test]
    fn products_and_cap() {
        let t = circle().product(&circle()).unwrap().product(&circle()).unwrap();
        assert_eq!(t.dims(), vec![1, 3, 3, 1]);
        assert_eq!(t.d(), build_torus(3).unwrap().d());
        let s = build_su2().product(&circle()).unwrap();
        assert_eq!(s.dims(), vec![1, 4, 6, 4, 1]);
        let big = build_torus(5).unwrap().product(&build_torus(3).unwrap());
        assert!(matches!(big, Err(Error::SizeCap { .. })));
    }

    #[test]
    fn label_round_trip() {
        let m = build_su2();
        let (s, mono) = m.parse_monomial("x3^x1").unwrap();
        assert_eq!((s, mono), (-1.0, vec![0, 2]));
        assert_eq!(m.monomial_label(&[0, 2]), "x1^x3");
    }
}
