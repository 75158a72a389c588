//! Graded vector spaces and complexes.
//!
//! A space is an ordered list of pieces, each with a filtration degree and a
//! parity. Exterior models use parity = degree mod 2; superconnection models
//! carry an independent fibre parity, so the two are kept separate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, op_norm, submatrix, Mat};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub degree: usize,
    pub parity: u8,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedSpace {
    pieces: Vec<Piece>,
    labels: Vec<String>,
}

impl GradedSpace {
    /// Pieces c_0..c_n in degrees 0..n with parity = degree mod 2.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        let pieces: Vec<Piece> = dims
            .iter()
            .enumerate()
            .map(|(k, &dim)| Piece {
                degree: k,
                parity: (k % 2) as u8,
                dim,
            })
            .collect();
        let labels = pieces
            .iter()
            .flat_map(|p| (0..p.dim).map(move |i| format!("v{}_{}", p.degree, i)))
            .collect();
        Self::new(pieces, labels)
    }

    pub fn new(pieces: Vec<Piece>, labels: Vec<String>) -> Result<Self> {
        let total: usize = pieces.iter().map(|p| p.dim).sum();
        if total == 0 {
            return Err(Error::Invalid("graded space must have total dimension ≥ 1".into()));
        }
        if labels.len() != total {
            return Err(Error::Shape(format!(
                "{} labels for a space of dimension {total}",
                labels.len()
            )));
        }
        if pieces.iter().any(|p| p.parity > 1) {
            return Err(Error::Invalid("parity must be 0 or 1".into()));
        }
        Ok(Self { pieces, labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(Error::Shape("label count mismatch".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.pieces.iter().map(|p| p.dim).sum()
    }

    pub fn top_degree(&self) -> usize {
        self.pieces.iter().map(|p| p.degree).max().unwrap_or(0)
    }

    /// True when every piece has parity = degree mod 2.
    pub fn is_degree_parity(&self) -> bool {
        self.pieces.iter().all(|p| p.parity as usize == p.degree % 2)
    }

    /// Dimensions per degree 0..=top (pieces of equal degree are summed).
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![0; self.top_degree() + 1];
        for p in &self.pieces {
            d[p.degree] += p.dim;
        }
        d
    }

    /// (even, odd) dimensions.
    pub fn parity_dims(&self) -> [usize; 2] {
        let mut d = [0, 0];
        for p in &self.pieces {
            d[p.parity as usize] += p.dim;
        }
        d
    }

    /// Degree of each basis vector.
    pub fn degrees(&self) -> Vec<usize> {
        self.pieces
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.degree, p.dim))
            .collect()
    }

    /// Parity of each basis vector.
    pub fn parities(&self) -> Vec<u8> {
        self.pieces
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.parity, p.dim))
            .collect()
    }

    /// Basis indices of each piece, in piece order.
    pub fn piece_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut off = 0;
        self.pieces
            .iter()
            .map(|p| {
                let r = off..off + p.dim;
                off += p.dim;
                r
            })
            .collect()
    }

    pub fn indices_of_degree(&self, k: usize) -> Vec<usize> {
        self.degrees()
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn indices_of_parity(&self, p: u8) -> Vec<usize> {
        self.parities()
            .iter()
            .enumerate()
            .filter(|(_, &q)| q == p)
            .map(|(i, _)| i)
            .collect()
    }

    /// Grading operator N: diagonal, value k on degree k.
    pub fn grading_operator(&self) -> Mat {
        let deg = self.degrees();
        Mat::from_fn(deg.len(), deg.len(), |i, j| if i == j { deg[i] as f64 } else { 0.0 })
    }

    /// ρ_t = t^{N/2}.
    pub fn rho(&self, t: f64) -> Mat {
        let deg = self.degrees();
        Mat::from_fn(deg.len(), deg.len(), |i, j| {
            if i == j {
                t.powf(deg[i] as f64 / 2.0)
            } else {
                0.0
            }
        })
    }

    /// Σ_k (−1)^k k dim V^k, the supertrace of N on the whole space.
    pub fn str_grading(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| sign(p.parity) * p.degree as f64 * p.dim as f64)
            .sum()
    }
}

#[inline]
pub fn sign(parity: u8) -> f64 {
    if parity == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradingMode {
    /// Blocks only from degree k to k+1.
    Z,
    /// Blocks from degree k to k+j, j odd and positive.
    Z2,
    /// Blocks from degree k to k+j, j ≥ 0, parity-reversing.
    Filtered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedComplex {
    space: GradedSpace,
    differential: Mat,
    mode: GradingMode,
}

impl GradedComplex {
    /// Validates shape, parity, block structure and square-zero.
    pub fn new(space: GradedSpace, differential: Mat, mode: GradingMode, tol: &Tolerances) -> Result<Self> {
        let c = Self::new_unchecked(space, differential, mode)?;
        let res = c.square_residual();
        let nrm = op_norm(&c.differential);
        let bound = tol.flat * nrm.max(1.0).powi(2);
        if res >= bound {
            return Err(Error::NotSquareZero { residual: res, bound });
        }
        Ok(c)
    }

    /// Validates shape and block structure only.
    pub fn new_unchecked(space: GradedSpace, differential: Mat, mode: GradingMode) -> Result<Self> {
        let n = space.dim();
        if differential.nrows() != n || differential.ncols() != n {
            return Err(Error::Shape(format!(
                "differential is {}x{}, space has dimension {n}",
                differential.nrows(),
                differential.ncols()
            )));
        }
        let deg = space.degrees();
        let par = space.parities();
        for i in 0..n {
            for j in 0..n {
                if differential[(i, j)] == 0.0 {
                    continue;
                }
                let ok_parity = par[i] != par[j];
                let shift = deg[i] as i64 - deg[j] as i64;
                let ok_shift = match mode {
                    GradingMode::Z => shift == 1,
                    GradingMode::Z2 => shift >= 1 && shift % 2 == 1,
                    GradingMode::Filtered => shift >= 0,
                };
                if !ok_parity || !ok_shift {
                    return Err(Error::Invalid(format!(
                        "differential entry ({i},{j}) maps degree {} to {} in {:?} mode",
                        deg[j], deg[i], mode
                    )));
                }
            }
        }
        Ok(Self {
            space,
            differential,
            mode,
        })
    }

    pub fn space(&self) -> &GradedSpace {
        &self.space
    }

    pub fn differential(&self) -> &Mat {
        &self.differential
    }

    pub fn mode(&self) -> GradingMode {
        self.mode
    }

    /// Max-entry magnitude of d².
    pub fn square_residual(&self) -> f64 {
        max_abs(&(&self.differential * &self.differential))
    }

    /// Block of the differential from degree `from` to degree `to`.
    pub fn block(&self, from: usize, to: usize) -> Mat {
        let r = self.space.indices_of_degree(to);
        let c = self.space.indices_of_degree(from);
        submatrix(&self.differential, &r, &c)
    }

    /// Component raising degree by exactly `shift`.
    pub fn component(&self, shift: usize) -> Mat {
        let deg = self.space.degrees();
        let n = deg.len();
        Mat::from_fn(n, n, |i, j| {
            if deg[i] == deg[j] + shift {
                self.differential[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Degree shifts carried by nonzero blocks.
    pub fn shifts(&self) -> Vec<usize> {
        let deg = self.space.degrees();
        let mut s: Vec<usize> = Vec::new();
        for i in 0..deg.len() {
            for j in 0..deg.len() {
                if self.differential[(i, j)] != 0.0 && deg[i] >= deg[j] {
                    let k = deg[i] - deg[j];
                    if !s.contains(&k) {
                        s.push(k);
                    }
                }
            }
        }
        s.sort_unstable();
        s
    }

    /// The complex with the same space and a new differential.
    pub fn with_differential(&self, d: Mat) -> Result<Self> {
        Self::new_unchecked(self.space.clone(), d, self.mode)
    }
}

/// str(A) = tr(A₊) − tr(A₋).
pub fn supertrace(a: &Mat, space: &GradedSpace) -> Result<f64> {
    if a.nrows() != space.dim() || a.ncols() != space.dim() {
        return Err(Error::Shape("operator does not act on the space".into()));
    }
    let par = space.parities();
    Ok((0..a.nrows()).map(|i| sign(par[i]) * a[(i, i)]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_split_matches_dims() {
        let s = GradedSpace::from_dims(&[1, 3, 3, 1]).unwrap();
        assert_eq!(s.parity_dims(), [4, 4]);
        assert_eq!(s.dim(), 8);
        assert_eq!(s.dims(), vec![1, 3, 3, 1]);
    }

    #[test]
    fn empty_space_rejected() {
        assert!(GradedSpace::from_dims(&[0, 0]).is_err());
    }

    #[test]
    fn supertrace_of_identity_and_grading() {
        let s = GradedSpace::from_dims(&[1, 3, 3, 1]).unwrap();
        let id = Mat::identity(8, 8);
        assert_eq!(supertrace(&id, &s).unwrap(), 0.0);
        assert_eq!(supertrace(&s.grading_operator(), &s).unwrap(), 0.0);
    }

    #[test]
    fn z_mode_rejects_long_blocks() {
        let s = GradedSpace::from_dims(&[1, 0, 0, 1]).unwrap();
        let mut d = Mat::zeros(2, 2);
        d[(1, 0)] = 2.0;
        assert!(GradedComplex::new_unchecked(s.clone(), d.clone(), GradingMode::Z).is_err());
        assert!(GradedComplex::new_unchecked(s, d, GradingMode::Z2).is_ok());
    }

    #[test]
    fn non_square_zero_rejected() {
        let s = GradedSpace::from_dims(&[1, 1, 1]).unwrap();
        let d = Mat::from_row_slice(3, 3, &[0., 0., 0., 1., 0., 0., 0., 1., 0.]);
        let err = GradedComplex::new(s, d, GradingMode::Z, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::NotSquareZero { .. }));
    }
}
