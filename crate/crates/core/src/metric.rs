//! Inner products per graded piece.
//!
//! Every spectral computation runs in orthonormal coordinates: with
//! G = L Lᵀ blockwise, x̃ = Lᵀ x is isometric, and an operator A becomes
//! Lᵀ A L⁻ᵀ. Adjoints are then transposes.

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graded::GradedSpace;
use crate::linalg::{sym_eigen, Mat, Vector};
use crate::tolerance::GRAM_CONDITION;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStructure {
    grams: Vec<Mat>,
}

/// Orthonormalizing change of coordinates for a metric.
#[derive(Debug, Clone)]
pub struct Frame {
    l: Mat,
    l_inv: Mat,
}

impl MetricStructure {
    pub fn identity(space: &GradedSpace) -> Self {
        Self {
            grams: space.pieces().iter().map(|p| Mat::identity(p.dim, p.dim)).collect(),
        }
    }

    /// One Gram matrix per piece, each symmetric positive-definite.
    pub fn new(space: &GradedSpace, grams: Vec<Mat>) -> Result<Self> {
        if grams.len() != space.pieces().len() {
            return Err(Error::Shape(format!(
                "{} Gram matrices for {} pieces",
                grams.len(),
                space.pieces().len()
            )));
        }
        for (g, p) in grams.iter().zip(space.pieces()) {
            if g.nrows() != p.dim || g.ncols() != p.dim {
                return Err(Error::Metric {
                    degree: p.degree,
                    reason: format!("Gram is {}x{}, piece has dimension {}", g.nrows(), g.ncols(), p.dim),
                });
            }
            let asym = (g - g.transpose()).amax();
            if asym > 1e-12 * g.amax().max(1.0) {
                return Err(Error::Metric {
                    degree: p.degree,
                    reason: format!("Gram not symmetric (asymmetry {asym:.3e})"),
                });
            }
            let (vals, _) = sym_eigen(g);
            if let Some(&min) = vals.first() {
                if min <= 0.0 {
                    return Err(Error::Metric {
                        degree: p.degree,
                        reason: format!("minimum eigenvalue {min:.3e} is not positive"),
                    });
                }
            }
        }
        Ok(Self { grams })
    }

    pub fn grams(&self) -> &[Mat] {
        &self.grams
    }

    /// Full block-diagonal Gram matrix.
    pub fn gram(&self) -> Mat {
        block_diag(&self.grams)
    }

    /// Metric g_t: the degree-k Gram scaled by t^k.
    pub fn scaled(&self, space: &GradedSpace, t: f64) -> Self {
        Self {
            grams: self
                .grams
                .iter()
                .zip(space.pieces())
                .map(|(g, p)| g * t.powi(p.degree as i32))
                .collect(),
        }
    }

    pub fn frame(&self) -> Frame {
        let ls: Vec<Mat> = self
            .grams
            .iter()
            .map(|g| {
                if g.nrows() == 0 {
                    Mat::zeros(0, 0)
                } else {
                    Cholesky::new(g.clone()).expect("validated positive-definite").l()
                }
            })
            .collect();
        let l_inv: Vec<Mat> = ls
            .iter()
            .map(|l| {
                if l.nrows() == 0 {
                    Mat::zeros(0, 0)
                } else {
                    l.clone().try_inverse().expect("triangular factor is invertible")
                }
            })
            .collect();
        Frame {
            l: block_diag(&ls),
            l_inv: block_diag(&l_inv),
        }
    }

    /// Σ over pieces of given parity of log det G.
    pub fn log_volume(&self, space: &GradedSpace, parity: u8) -> f64 {
        self.grams
            .iter()
            .zip(space.pieces())
            .filter(|(_, p)| p.parity == parity)
            .map(|(g, _)| sym_eigen(g).0.iter().map(|v| v.ln()).sum::<f64>())
            .sum()
    }

    /// Random congruence metric G = L Lᵀ per piece with condition ≤ 10³.
    /// With `unimodular`, each Gram is rescaled to determinant one.
    pub fn random<R: Rng>(space: &GradedSpace, rng: &mut R, unimodular: bool) -> Self {
        let grams = space
            .pieces()
            .iter()
            .map(|p| {
                let c = p.dim;
                if c == 0 {
                    return Mat::zeros(0, 0);
                }
                loop {
                    let l = Mat::from_fn(c, c, |i, j| {
                        let z: f64 = StandardNormal.sample(rng);
                        if i == j {
                            (0.6 * z).exp()
                        } else if i > j {
                            0.35 * z / (c as f64).sqrt()
                        } else {
                            0.0
                        }
                    });
                    let mut g = &l * l.transpose();
                    g = (&g + g.transpose()) * 0.5;
                    let (vals, _) = sym_eigen(&g);
                    let cond = vals[c - 1] / vals[0];
                    if vals[0] > 0.0 && cond <= GRAM_CONDITION {
                        if unimodular {
                            let logdet: f64 = vals.iter().map(|v| v.ln()).sum();
                            g *= (-logdet / c as f64).exp();
                        }
                        return g;
                    }
                }
            })
            .collect();
        Self { grams }
    }
}

impl Frame {
    /// Lᵀ A L⁻ᵀ
    pub fn to_ortho(&self, a: &Mat) -> Mat {
        self.l.transpose() * a * self.l_inv.transpose()
    }

    /// L⁻ᵀ Ã Lᵀ
    pub fn from_ortho(&self, a: &Mat) -> Mat {
        self.l_inv.transpose() * a * self.l.transpose()
    }

    pub fn vec_to_ortho(&self, x: &Vector) -> Vector {
        self.l.transpose() * x
    }

    pub fn vecs_from_ortho(&self, x: &Mat) -> Mat {
        self.l_inv.transpose() * x
    }

    pub fn vecs_to_ortho(&self, x: &Mat) -> Mat {
        self.l.transpose() * x
    }
}

/// D* with ⟨Dx, y⟩ = ⟨x, D*y⟩: D* = G⁻¹ Dᵀ G.
pub fn adjoint(d: &Mat, m: &MetricStructure) -> Result<Mat> {
    let g = m.gram();
    if g.nrows() != d.nrows() || d.nrows() != d.ncols() {
        return Err(Error::Shape("operator and metric disagree in dimension".into()));
    }
    let chol = Cholesky::new(g.clone()).ok_or(Error::Metric {
        degree: 0,
        reason: "Gram matrix not positive-definite".into(),
    })?;
    Ok(chol.solve(&(d.transpose() * g)))
}

/// ⟨x, y⟩ under the metric.
pub fn inner(m: &MetricStructure, x: &Vector, y: &Vector) -> f64 {
    (x.transpose() * m.gram() * y)[(0, 0)]
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}
