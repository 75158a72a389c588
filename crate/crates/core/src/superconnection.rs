//! Flat superconnections on a single fibre.
//!
//! A model is a ℤ₂-graded space with a form-degree filtration and odd
//! components A[i] raising form degree by exactly i. The Gauss–Manin
//! complex lives on ℋ = ker Δ_{A[0]} and carries ∇̃ = p A[1] i; the homotopy
//! transfer p δ (1 − hδ)^{-1} i with h = −A[0]⁺ is computed alongside.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deformation::DeformationFamily;
use crate::error::{Error, Result};
use crate::graded::{GradedComplex, GradedSpace, GradingMode, Piece};
use crate::hodge::{cohomology_dims, sdet_dstar_d};
use crate::linalg::{count_zero_below, max_abs, pinv, submatrix, sym_eigen, zero_threshold, Mat, Vector};
use crate::metric::MetricStructure;
use crate::spectral::FilteredComplex;
use crate::tolerance::Tolerances;

/// Total dimension cap for generated models.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Clone)]
pub struct SuperconnectionModel {
    space: GradedSpace,
    components: BTreeMap<usize, Mat>,
}

impl SuperconnectionModel {
    pub fn new(space: GradedSpace, components: BTreeMap<usize, Mat>) -> Result<Self> {
        let n = space.dim();
        let deg = space.degrees();
        let par = space.parities();
        for (&s, c) in &components {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Shape(format!("A[{s}] has the wrong size")));
            }
            for i in 0..n {
                for j in 0..n {
                    if c[(i, j)] != 0.0 && (deg[i] != deg[j] + s || par[i] == par[j]) {
                        return Err(Error::Invalid(format!("A[{s}] entry ({i},{j}) is not odd of filtration shift {s}")));
                    }
                }
            }
        }
        Ok(Self { space, components })
    }

    /// d_H on the trivial line: A[1] = d, A[2i+1] = H_{2i+1}∧.
    pub fn from_family(fam: &DeformationFamily) -> Result<Self> {
        let mut comps = BTreeMap::new();
        for (s, m) in fam.components() {
            *comps.entry(s).or_insert_with(|| Mat::zeros(m.nrows(), m.ncols())) += m;
        }
        Self::new(fam.space().clone(), comps)
    }

    pub fn space(&self) -> &GradedSpace {
        &self.space
    }

    pub fn components(&self) -> &BTreeMap<usize, Mat> {
        &self.components
    }

    pub fn component(&self, i: usize) -> Mat {
        let n = self.space.dim();
        self.components.get(&i).cloned().unwrap_or_else(|| Mat::zeros(n, n))
    }

    pub fn set_component(&mut self, i: usize, a: Mat) -> Result<()> {
        let mut comps = self.components.clone();
        comps.insert(i, a);
        *self = Self::new(self.space.clone(), comps)?;
        Ok(())
    }

    pub fn assembled(&self) -> Mat {
        let n = self.space.dim();
        self.components.values().fold(Mat::zeros(n, n), |acc, c| acc + c)
    }

    /// Max-norm of the shift-s part Σ_{i+j=s} A[i]A[j] of A², s = 0..=2·max shift.
    pub fn flatness_residuals(&self) -> Vec<f64> {
        let top = self.components.keys().copied().max().unwrap_or(0);
        (0..=2 * top)
            .map(|s| {
                let n = self.space.dim();
                let mut acc = Mat::zeros(n, n);
                for (&i, a) in &self.components {
                    if let Some(b) = s.checked_sub(i).and_then(|j| self.components.get(&j)) {
                        acc += a * b;
                    }
                }
                max_abs(&acc)
            })
            .collect()
    }

    pub fn max_flatness_residual(&self) -> f64 {
        self.flatness_residuals().into_iter().fold(0.0, f64::max)
    }

    pub fn filtered(&self, metric: MetricStructure, tol: Tolerances) -> Result<FilteredComplex> {
        FilteredComplex::new(self.space.clone(), self.components.clone(), metric, tol)
    }
}

/// The induced complex on ℋ = H(V, A[0]).
#[derive(Debug, Clone)]
pub struct GaussManin {
    /// ∇̃ = p A[1] i on ℋ (orthonormal harmonic basis).
    pub complex: GradedComplex,
    /// p δ (1 − hδ)^{-1} i, δ = A − A[0].
    pub transferred: GradedComplex,
    /// Harmonic basis of A[0] in orthonormal coordinates of V.
    pub inclusion: Mat,
    pub plain_square: f64,
    pub transferred_square: f64,
}

pub fn gauss_manin(scm: &SuperconnectionModel, m: &MetricStructure, tol: &Tolerances) -> Result<GaussManin> {
    let frame = m.frame();
    let space = scm.space();
    let n = space.dim();
    let a0 = frame.to_ortho(&scm.component(0));
    let lap = a0.transpose() * &a0 + &a0 * a0.transpose();
    let pieces: Vec<(Piece, Vec<usize>)> = {
        let ranges = space.piece_ranges();
        space.pieces().iter().copied().zip(ranges.into_iter().map(|r| r.collect())).collect()
    };
    let eigs: Vec<(Vec<f64>, Mat)> = pieces.iter().map(|(_, ix)| sym_eigen(&submatrix(&lap, ix, ix))).collect();
    let thr = zero_threshold(&eigs.iter().flat_map(|e| e.0.iter().copied()).collect::<Vec<_>>(), tol.rank);
    let mut cols: Vec<Vector> = Vec::new();
    let mut h_pieces = Vec::new();
    let mut labels = Vec::new();
    for ((piece, ix), (vals, vecs)) in pieces.iter().zip(&eigs) {
        let z = count_zero_below(vals, thr, "ker Δ of A[0]")?;
        for q in 0..z {
            let mut v = Vector::zeros(n);
            for (r, &i) in ix.iter().enumerate() {
                v[i] = vecs[(r, q)];
            }
            cols.push(v);
            labels.push(format!("h{}_{}_{}", piece.degree, piece.parity, q));
        }
        h_pieces.push(Piece {
            degree: piece.degree,
            parity: piece.parity,
            dim: z,
        });
    }
    if cols.is_empty() {
        return Err(Error::Invalid("A[0] is acyclic; the Gauss–Manin complex is zero".into()));
    }
    let i = Mat::from_columns(&cols);
    let p = i.transpose();
    let h_space = GradedSpace::new(h_pieces, labels)?;

    let a1 = frame.to_ortho(&scm.component(1));
    let plain = &p * &a1 * &i;
    let delta = frame.to_ortho(&scm.assembled()) - &a0;
    let h = -pinv(&a0);
    let hd = &h * &delta;
    let mut series = Mat::identity(n, n);
    let mut term = Mat::identity(n, n);
    for _ in 0..n {
        term = &term * &hd;
        if max_abs(&term) == 0.0 {
            break;
        }
        series += &term;
    }
    let transferred = &p * &delta * series * &i;
    let plain_square = max_abs(&(&plain * &plain));
    let transferred_square = max_abs(&(&transferred * &transferred));
    Ok(GaussManin {
        complex: GradedComplex::new_unchecked(h_space.clone(), mask(plain, &h_space, Some(1)), GradingMode::Filtered)?,
        transferred: GradedComplex::new_unchecked(h_space.clone(), mask(transferred, &h_space, None), GradingMode::Filtered)?,
        inclusion: i,
        plain_square,
        transferred_square,
    })
}

/// Keeps only odd entries of the allowed filtration shift; the rest is roundoff.
fn mask(mut a: Mat, space: &GradedSpace, shift: Option<usize>) -> Mat {
    let deg = space.degrees();
    let par = space.parities();
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let ok = par[r] != par[c] && deg[r] >= deg[c] && shift.is_none_or(|s| deg[r] == deg[c] + s);
            if !ok {
                a[(r, c)] = 0.0;
            }
        }
    }
    a
}

/// An elementary pair u ↦ w raising form degree by `shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub degree: usize,
    pub parity: u8,
    pub shift: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsProfile {
    pub pairs: Vec<PairSpec>,
    /// Cohomology generators as (degree, parity).
    pub generators: Vec<(usize, u8)>,
    /// Conjugate by a filtration-raising map (otherwise block-diagonal).
    pub mixing: bool,
}

impl DimsProfile {
    pub fn dim(&self) -> usize {
        2 * self.pairs.len() + self.generators.len()
    }

    /// Random profile over form degrees 0..=max_degree with the given shifts.
    pub fn random(seed: u64, max_degree: usize, shifts: &[usize], max_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f11);
        let n_pairs = rng.random_range(2..=(max_dim / 2 - 2).clamp(2, 6));
        let pairs = (0..n_pairs)
            .map(|_| {
                let shift = shifts[rng.random_range(0..shifts.len())];
                PairSpec {
                    degree: rng.random_range(0..=max_degree - shift.min(max_degree)),
                    parity: rng.random_range(0..2),
                    shift,
                }
            })
            .collect();
        let n_gen = rng.random_range(1..=3);
        let generators = (0..n_gen)
            .map(|_| (rng.random_range(0..=max_degree), rng.random_range(0..2)))
            .collect();
        Self {
            pairs,
            generators,
            mixing: true,
        }
    }
}

/// Block sum of elementary pairs and generators, conjugated by a random
/// invertible map preserving parity and the filtration.
pub fn random_flat_superconnection(seed: u64, profile: &DimsProfile) -> Result<SuperconnectionModel> {
    if profile.dim() > MAX_DIM {
        return Err(Error::SizeCap {
            requested: profile.dim(),
            cap: MAX_DIM,
        });
    }
    if profile.dim() == 0 {
        return Err(Error::Invalid("empty profile".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Vectors: (degree, parity, pair id, is target)
    let mut vecs: Vec<(usize, u8)> = Vec::new();
    let mut arrows: Vec<(usize, usize, f64)> = Vec::new();
    for p in &profile.pairs {
        let u = vecs.len();
        vecs.push((p.degree, p.parity));
        vecs.push((p.degree + p.shift, 1 - p.parity));
        let z: f64 = StandardNormal.sample(&mut rng);
        let scale = (0.5 * z).exp();
        arrows.push((u + 1, u, scale));
    }
    vecs.extend(profile.generators.iter().copied());
    let mut order: Vec<usize> = (0..vecs.len()).collect();
    order.sort_by_key(|&i| (vecs[i].0, vecs[i].1, i));
    let pos: Vec<usize> = {
        let mut pos = vec![0; vecs.len()];
        for (new, &old) in order.iter().enumerate() {
            pos[old] = new;
        }
        pos
    };
    let mut pieces: Vec<Piece> = Vec::new();
    for &old in &order {
        let (d, p) = vecs[old];
        match pieces.last_mut() {
            Some(last) if last.degree == d && last.parity == p => last.dim += 1,
            _ => pieces.push(Piece {
                degree: d,
                parity: p,
                dim: 1,
            }),
        }
    }
    let labels = order.iter().map(|&o| format!("b{o}")).collect();
    let space = GradedSpace::new(pieces, labels)?;
    let n = space.dim();
    let mut a = Mat::zeros(n, n);
    for &(to, from, c) in &arrows {
        a[(pos[to], pos[from])] = c;
    }
    let deg = space.degrees();
    let par = space.parities();
    let g = loop {
        let g = Mat::from_fn(n, n, |i, j| {
            if par[i] != par[j] {
                return 0.0;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            if deg[i] == deg[j] {
                if i == j {
                    1.0 + 0.3 * z
                } else {
                    0.3 * z
                }
            } else if profile.mixing && deg[i] > deg[j] {
                0.5 * z
            } else {
                0.0
            }
        });
        if let Some(inv) = g.clone().try_inverse() {
            let cond = crate::linalg::op_norm(&g) * crate::linalg::op_norm(&inv);
            if cond < 1e3 {
                break (g, inv);
            }
        }
    };
    let conj = &g.0 * a * &g.1;
    // g preserves the filtration, so shifts below the smallest pair shift vanish exactly.
    let min_shift = profile.pairs.iter().map(|p| p.shift).min().unwrap_or(usize::MAX);
    let mut comps = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let v = conj[(i, j)];
            if deg[i] >= deg[j] + min_shift && par[i] != par[j] && v != 0.0 {
                comps.entry(deg[i] - deg[j]).or_insert_with(|| Mat::zeros(n, n))[(i, j)] = v;
            }
        }
    }
    SuperconnectionModel::new(space, comps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureResult {
    /// ½ log sdet'(∇̃*∇̃) on ℋ.
    pub log_gauss_manin: f64,
    pub log_kappa: f64,
    pub log_kappa_pages: f64,
    pub log_identification: f64,
    /// ½ log sdet'(A*A) on V.
    pub log_twisted: f64,
    /// ½ log sdet'(A[0]*A[0]), the fibre torsion.
    pub fibre_term: f64,
    /// log ‖σ‖_{(ℋ,∇̃)} − (log κ + log ‖·‖_{(V,A)}), signed.
    pub signed_residual: f64,
    pub residual: f64,
    /// signed_residual + fibre_term; zero when the fibre torsion accounts for the gap.
    pub fibre_corrected: f64,
    pub page_dims: Vec<[usize; 2]>,
    pub gauss_manin_dims: [usize; 2],
    pub transferred_square: f64,
}

/// Compares the RS-type metric of (ℋ, ∇̃) with κ* of the twisted metric of (V, A).
pub fn conjecture_check(scm: &SuperconnectionModel, m: &MetricStructure, tol: &Tolerances) -> Result<ConjectureResult> {
    let gm = gauss_manin(scm, m, tol)?;
    let hm = MetricStructure::identity(gm.complex.space());
    let log_gauss_manin = 0.5 * sdet_dstar_d(gm.complex.differential(), gm.complex.space(), &hm, tol)?.log;
    let ss = scm.filtered(m.clone(), *tol)?.build_pages()?;
    let kappa = ss.kappa(2)?;
    let log_twisted = 0.5 * sdet_dstar_d(&scm.assembled(), scm.space(), m, tol)?.log;
    let fibre_term = 0.5 * sdet_dstar_d(&scm.component(0), scm.space(), m, tol)?.log;
    let signed_residual = log_gauss_manin - (kappa.log_total() + log_twisted);
    let gauss_manin_dims = cohomology_dims(&gm.complex, tol)?.parity;
    Ok(ConjectureResult {
        log_gauss_manin,
        log_kappa: kappa.log_total(),
        log_kappa_pages: kappa.log_pages,
        log_identification: kappa.log_identification,
        log_twisted,
        fibre_term,
        signed_residual,
        residual: signed_residual.abs(),
        fibre_corrected: signed_residual + fibre_term,
        page_dims: ss.pages().iter().map(|p| p.parity_dims()).chain(std::iter::once(ss.infinity().parity_dims())).collect(),
        gauss_manin_dims,
        transferred_square: gm.transferred_square,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub seed: u64,
    pub dims: [usize; 2],
    pub residual: f64,
    pub fibre_term: f64,
    pub fibre_corrected: f64,
    pub pages: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureBatch {
    pub records: Vec<BatchRecord>,
    pub summary: BatchSummary,
}

/// Which family of random models a batch draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    /// A[0] = 0: odd shifts only.
    Proven,
    /// Shifts 0..=3 mixed.
    General,
}

pub fn batch_profile(kind: BatchKind, seed: u64) -> DimsProfile {
    match kind {
        BatchKind::Proven => DimsProfile::random(seed, 4, &[1, 3], 24),
        BatchKind::General => DimsProfile::random(seed, 4, &[0, 1, 2, 3], 24),
    }
}

/// Conjecture residuals over a seed range, in seed order.
pub fn conjecture_batch(kind: BatchKind, seeds: std::ops::Range<u64>) -> Result<ConjectureBatch> {
    if seeds.is_empty() {
        return Err(Error::Invalid("empty seed range".into()));
    }
    let tol = Tolerances::default();
    let records: Vec<BatchRecord> = seeds
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&seed| {
            let scm = random_flat_superconnection(seed, &batch_profile(kind, seed))?;
            let m = MetricStructure::identity(scm.space());
            let r = conjecture_check(&scm, &m, &tol)?;
            Ok(BatchRecord {
                seed,
                dims: scm.space().parity_dims(),
                residual: r.residual,
                fibre_term: r.fibre_term,
                fibre_corrected: r.fibre_corrected,
                pages: r.page_dims,
            })
        })
        .collect::<Result<_>>()?;
    let mut sorted: Vec<f64> = records.iter().map(|r| r.residual).collect();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    Ok(ConjectureBatch {
        summary: BatchSummary {
            count: k,
            min: sorted[0],
            median,
            max: sorted[k - 1],
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{build_torus, FluxForm};

    #[test]
    fn t3_twist_is_flat() {
        let m = build_torus(3).unwrap();
        let h = FluxForm::volume(&m, 2.0).unwrap();
        let fam = DeformationFamily::from_exterior(&m, &h, MetricStructure::identity(&m.space()), Tolerances::default()).unwrap();
        let scm = SuperconnectionModel::from_family(&fam).unwrap();
        assert!(scm.flatness_residuals().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn random_model_is_flat_and_deterministic() {
        let prof = DimsProfile::random(3, 4, &[0, 1, 2, 3], 24);
        let a = random_flat_superconnection(3, &prof).unwrap();
        let b = random_flat_superconnection(3, &prof).unwrap();
        assert_eq!(a.assembled(), b.assembled());
        assert!(a.max_flatness_residual() < 1e-12);
    }

    #[test]
    fn elementary_pair_drops_two() {
        let space = GradedSpace::new(
            vec![
                Piece { degree: 0, parity: 0, dim: 2 },
                Piece { degree: 0, parity: 1, dim: 1 },
                Piece { degree: 1, parity: 1, dim: 1 },
            ],
            (0..4).map(|i| format!("v{i}")).collect(),
        )
        .unwrap();
        let mut a0 = Mat::zeros(4, 4);
        a0[(2, 0)] = 2.0;
        let mut a1 = Mat::zeros(4, 4);
        a1[(3, 1)] = 5.0;
        let scm = SuperconnectionModel::new(space.clone(), BTreeMap::from([(0, a0), (1, a1)])).unwrap();
        let gm = gauss_manin(&scm, &MetricStructure::identity(&space), &Tolerances::default()).unwrap();
        assert_eq!(gm.complex.space().dim(), 2);
        assert!((max_abs(gm.complex.differential()) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn corrupted_a2_shows_in_shift_two() {
        let space = GradedSpace::new(
            vec![
                Piece { degree: 0, parity: 0, dim: 1 },
                Piece { degree: 0, parity: 1, dim: 1 },
                Piece { degree: 2, parity: 0, dim: 1 },
            ],
            (0..3).map(|i| format!("v{i}")).collect(),
        )
        .unwrap();
        let mut a0 = Mat::zeros(3, 3);
        a0[(1, 0)] = 1.0;
        let mut scm = SuperconnectionModel::new(space, BTreeMap::from([(0, a0)])).unwrap();
        let mut e = Mat::zeros(3, 3);
        e[(2, 1)] = 1e-3;
        scm.set_component(2, e).unwrap();
        let r = scm.flatness_residuals();
        assert!((r[2] - 1e-3).abs() < 1e-18);
        assert_eq!(r[0], 0.0);
    }
}
