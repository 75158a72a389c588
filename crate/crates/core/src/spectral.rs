//! Spectral sequence of the decreasing filtration by form degree.
//!
//! Everything runs in orthonormal coordinates of the metric, where page
//! representatives are harmonic for all earlier page Laplacians and inherit
//! the ambient inner product. Page r carries the differential ∂_r of
//! filtration shift r, so E_2 = H(d) for flux-twisted models.
//!
//! A class x₀ of filtration degree l survives to page r when the zig-zag
//! equations Σ_{i=0}^{m} D_i x_{m−i} = 0, m = 1..r−1, have a solution
//! x_j ∈ V^{l+j}; then ∂_r x₀ is the degree-(l+r) part of D(x₀ + … + x_{r−1}).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deformation::DeformationFamily;
use crate::error::{Error, Result};
use crate::graded::{GradedComplex, GradedSpace, GradingMode};
use crate::hodge::{sdet_from_spectra, SuperDet};
use crate::linalg::{
    count_zero_below, log_abs_det, max_abs, op_norm, pinv, submatrix, sym_eigen, zero_threshold, Mat, Vector,
};
use crate::metric::MetricStructure;
use crate::tolerance::{Tolerances, ZIGZAG};

/// Total differential split into homogeneous filtration shifts.
#[derive(Debug, Clone)]
pub struct FilteredComplex {
    space: GradedSpace,
    components: BTreeMap<usize, Mat>,
    metric: MetricStructure,
    tol: Tolerances,
}

impl FilteredComplex {
    pub fn new(
        space: GradedSpace,
        components: BTreeMap<usize, Mat>,
        metric: MetricStructure,
        tol: Tolerances,
    ) -> Result<Self> {
        let n = space.dim();
        let deg = space.degrees();
        let par = space.parities();
        let mut total = Mat::zeros(n, n);
        for (&s, c) in &components {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Shape(format!("shift-{s} component has the wrong size")));
            }
            for i in 0..n {
                for j in 0..n {
                    if c[(i, j)] == 0.0 {
                        continue;
                    }
                    if deg[i] != deg[j] + s || par[i] == par[j] {
                        return Err(Error::Invalid(format!(
                            "shift-{s} component entry ({i},{j}) is not an odd map of filtration shift {s}"
                        )));
                    }
                }
            }
            total += c;
        }
        let bound = tol.flat * op_norm(&total).max(1.0).powi(2);
        let res = max_abs(&(&total * &total));
        if res >= bound {
            return Err(Error::NotSquareZero { residual: res, bound });
        }
        let components = components.into_iter().filter(|(_, c)| max_abs(c) > 0.0).collect();
        Ok(Self {
            space,
            components,
            metric,
            tol,
        })
    }

    /// Filtration of a flux-twisted family: shift 1 is d, shift 2i+1 is H_{2i+1}.
    pub fn from_family(fam: &DeformationFamily) -> Result<Self> {
        let mut comps = BTreeMap::new();
        for (s, m) in fam.components() {
            *comps.entry(s).or_insert_with(|| Mat::zeros(m.nrows(), m.ncols())) += m;
        }
        Self::new(fam.space().clone(), comps, fam.metric().clone(), *fam.tolerances())
    }

    /// Splits a complex by filtration shift.
    pub fn from_complex(c: &GradedComplex, metric: MetricStructure, tol: Tolerances) -> Result<Self> {
        let comps = c.shifts().into_iter().map(|s| (s, c.component(s))).collect();
        Self::new(c.space().clone(), comps, metric, tol)
    }

    pub fn space(&self) -> &GradedSpace {
        &self.space
    }

    pub fn metric(&self) -> &MetricStructure {
        &self.metric
    }

    pub fn components(&self) -> &BTreeMap<usize, Mat> {
        &self.components
    }

    pub fn total(&self) -> Mat {
        let n = self.space.dim();
        self.components.values().fold(Mat::zeros(n, n), |acc, c| acc + c)
    }

    pub fn total_complex(&self) -> Result<GradedComplex> {
        GradedComplex::new_unchecked(self.space.clone(), self.total(), GradingMode::Filtered)
    }

    /// Brute-force parity dimensions of H(V, D).
    pub fn cohomology_parity_dims(&self) -> Result<[usize; 2]> {
        Ok(crate::hodge::cohomology_dims(&self.total_complex()?, &self.tol)?.parity)
    }

    /// Pages E_0, E_1, … through stabilization.
    pub fn build_pages(&self) -> Result<SpectralSequence> {
        let frame = self.metric.frame();
        let comps: BTreeMap<usize, Mat> = self.components.iter().map(|(&s, c)| (s, frame.to_ortho(c))).collect();
        let ctx = Ctx {
            deg: self.space.degrees(),
            par: self.space.parities(),
            comps,
            max_deg: self.space.degrees().into_iter().max().unwrap_or(0),
        };
        let n = self.space.dim();
        let mut basis = Mat::identity(n, n);
        let mut degrees = ctx.deg.clone();
        let mut parities = ctx.par.clone();
        let mut pages = Vec::new();
        for r in 0..=ctx.max_deg + 1 {
            let (differential, grading_residual, image) = ctx.page_differential(&basis, &degrees, r)?;
            let page = SSPage {
                index: r,
                basis: basis.clone(),
                degrees: degrees.clone(),
                parities: parities.clone(),
                differential,
                grading_residual,
                image,
            };
            let (nb, nd, np) = page.next_basis(&self.tol)?;
            pages.push(page);
            basis = nb;
            degrees = nd;
            parities = np;
        }
        let infinity = SSPage {
            index: ctx.max_deg + 2,
            basis,
            differential: Mat::zeros(degrees.len(), degrees.len()),
            degrees,
            parities,
            grading_residual: 0.0,
            image: Mat::zeros(n, 0),
        };
        Ok(SpectralSequence {
            pages,
            infinity,
            ctx,
            tol: self.tol,
        })
    }
}

#[derive(Debug, Clone)]
struct Ctx {
    deg: Vec<usize>,
    par: Vec<u8>,
    comps: BTreeMap<usize, Mat>,
    max_deg: usize,
}

impl Ctx {
    fn indices(&self, k: usize) -> Vec<usize> {
        (0..self.deg.len()).filter(|&i| self.deg[i] == k).collect()
    }

    /// Solves the zig-zag equations m = 1..steps for every column of `x0s`
    /// (all of filtration degree l). Returns the lifts x₀ + x₁ + … + x_steps.
    fn lift(&self, x0s: &Mat, l: usize, steps: usize) -> Result<Mat> {
        let mut out = x0s.clone();
        if steps == 0 || x0s.ncols() == 0 {
            return Ok(out);
        }
        let blocks: Vec<Vec<usize>> = (1..=steps).map(|j| self.indices(l + j)).collect();
        let offs: Vec<usize> = std::iter::once(0)
            .chain(blocks.iter().scan(0, |a, b| {
                *a += b.len();
                Some(*a)
            }))
            .collect();
        let size = offs[steps];
        if size == 0 {
            return Ok(out);
        }
        let mut a = Mat::zeros(size, size);
        let mut rhs = Mat::zeros(size, x0s.ncols());
        let src = self.indices(l);
        for m in 1..=steps {
            let rows = &blocks[m - 1];
            let ro = offs[m - 1];
            for (&i, di) in &self.comps {
                if i > m {
                    continue;
                }
                let j = m - i;
                if j == 0 {
                    let dx = submatrix(di, rows, &src) * submatrix(x0s, &src, &(0..x0s.ncols()).collect::<Vec<_>>());
                    let mut view = rhs.view_mut((ro, 0), (rows.len(), x0s.ncols()));
                    view -= dx;
                } else {
                    let blk = submatrix(di, rows, &blocks[j - 1]);
                    let mut view = a.view_mut((ro, offs[j - 1]), (rows.len(), blocks[j - 1].len()));
                    view += blk;
                }
            }
        }
        let x = pinv(&a) * &rhs;
        let resid = max_abs(&(&a * &x - &rhs));
        if resid > ZIGZAG * max_abs(&rhs).max(1.0) {
            return Err(Error::Invalid(format!(
                "zig-zag equations from degree {l} not solvable (residual {resid:.3e}); class does not survive"
            )));
        }
        for j in 1..=steps {
            for (r, &i) in blocks[j - 1].iter().enumerate() {
                for c in 0..x0s.ncols() {
                    out[(i, c)] += x[(offs[j - 1] + r, c)];
                }
            }
        }
        Ok(out)
    }

    fn apply(&self, v: &Mat) -> Mat {
        let mut out = Mat::zeros(v.nrows(), v.ncols());
        for c in self.comps.values() {
            out += c * v;
        }
        out
    }

    /// ∂_r on the page spanned by `basis`, its grading residual and the
    /// ambient images.
    fn page_differential(&self, basis: &Mat, degrees: &[usize], r: usize) -> Result<(Mat, f64, Mat)> {
        let k = basis.ncols();
        let n = basis.nrows();
        let mut img = Mat::zeros(n, k);
        let mut by_degree: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (c, &l) in degrees.iter().enumerate() {
            by_degree.entry(l).or_default().push(c);
        }
        for (&l, cols) in &by_degree {
            let x0 = Mat::from_columns(&cols.iter().map(|&c| basis.column(c).into_owned()).collect::<Vec<_>>());
            let v = self.lift(&x0, l, r.saturating_sub(1))?;
            let dv = self.apply(&v);
            for (q, &c) in cols.iter().enumerate() {
                img.set_column(c, &dv.column(q));
            }
        }
        // Page coordinates: only the degree-(l+r) part counts as ∂_r; lower
        // degrees must vanish.
        let mut d = Mat::zeros(k, k);
        let mut residual: f64 = 0.0;
        for j in 0..k {
            for i in 0..k {
                let pair = basis.column(i).dot(&img.column(j));
                if degrees[i] == degrees[j] + r {
                    d[(i, j)] = pair;
                } else if degrees[i] < degrees[j] + r {
                    residual = residual.max(pair.abs());
                }
            }
        }
        Ok((d, residual, img))
    }
}

/// One page: orthonormal ℤ-graded representatives and the differential ∂_r.
#[derive(Debug, Clone)]
pub struct SSPage {
    pub index: usize,
    /// Columns: representatives in orthonormal coordinates.
    pub basis: Mat,
    pub degrees: Vec<usize>,
    pub parities: Vec<u8>,
    /// ∂_r in the page basis.
    pub differential: Mat,
    grading_residual: f64,
    image: Mat,
}

impl SSPage {
    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn parity_dims(&self) -> [usize; 2] {
        let odd = self.parities.iter().filter(|&&p| p == 1).count();
        [self.dim() - odd, odd]
    }

    /// dim E_{r,l} keyed by (l, parity).
    pub fn graded_dims(&self) -> BTreeMap<(usize, u8), usize> {
        let mut m = BTreeMap::new();
        for (&l, &p) in self.degrees.iter().zip(&self.parities) {
            *m.entry((l, p)).or_insert(0) += 1;
        }
        m
    }

    /// True when ∂_r has rank zero at the rank tolerance.
    pub fn is_zero(&self, tol: &Tolerances) -> bool {
        self.sdet(tol).map(|s| s.ranks == [0, 0]).unwrap_or(false)
    }

    /// Largest page component of ∂_r(E_{r,l}) outside E_{r,l+r} within the
    /// filtration, and of ∂_r*(E_{r,l}) outside E_{r,l−r}.
    pub fn grading_check(&self) -> GradingResidual {
        let k = self.dim();
        let mut adjoint: f64 = 0.0;
        let dt = self.differential.transpose();
        for i in 0..k {
            for j in 0..k {
                if self.degrees[i] + self.index != self.degrees[j] {
                    adjoint = adjoint.max(dt[(i, j)].abs());
                }
            }
        }
        GradingResidual {
            forward: self.grading_residual,
            adjoint,
        }
    }

    /// ∂_r² on the page.
    pub fn square_residual(&self) -> f64 {
        max_abs(&(&self.differential * &self.differential))
    }

    fn spectra(&self) -> [Vec<f64>; 2] {
        let q = self.differential.transpose() * &self.differential;
        [0u8, 1].map(|p| {
            let ix: Vec<usize> = (0..self.dim()).filter(|&i| self.parities[i] == p).collect();
            sym_eigen(&submatrix(&q, &ix, &ix)).0
        })
    }

    /// sdet'(∂_r*∂_r) with page parities.
    pub fn sdet(&self, tol: &Tolerances) -> Result<SuperDet> {
        sdet_from_spectra(&self.spectra(), tol.rank, &format!("page {}", self.index))
    }

    /// Knudsen–Mumford scalar of this page: −½ log sdet'(∂_r*∂_r).
    pub fn km_scalar(&self, tol: &Tolerances) -> Result<f64> {
        Ok(-0.5 * self.sdet(tol)?.log)
    }

    /// Orthonormal page-Laplacian kernel per (degree, parity) piece.
    #[allow(clippy::type_complexity)]
    fn next_basis(&self, tol: &Tolerances) -> Result<(Mat, Vec<usize>, Vec<u8>)> {
        let d = &self.differential;
        let lap = d.transpose() * d + d * d.transpose();
        let mut groups: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
        for c in 0..self.dim() {
            groups.entry((self.degrees[c], self.parities[c])).or_default().push(c);
        }
        let eigs: Vec<((usize, u8), Vec<usize>, Vec<f64>, Mat)> = groups
            .into_iter()
            .map(|(key, ix)| {
                let (v, w) = sym_eigen(&submatrix(&lap, &ix, &ix));
                (key, ix, v, w)
            })
            .collect();
        let all: Vec<f64> = eigs.iter().flat_map(|e| e.2.iter().copied()).collect();
        let thr = zero_threshold(&all, tol.rank);
        let n = self.basis.nrows();
        let mut cols: Vec<Vector> = Vec::new();
        let mut degrees = Vec::new();
        let mut parities = Vec::new();
        for ((l, p), ix, vals, vecs) in eigs {
            let z = count_zero_below(&vals, thr, &format!("page {} Laplacian", self.index))?;
            let sub = Mat::from_columns(&ix.iter().map(|&c| self.basis.column(c).into_owned()).collect::<Vec<_>>());
            for q in 0..z {
                cols.push(&sub * vecs.column(q));
                degrees.push(l);
                parities.push(p);
            }
        }
        let basis = if cols.is_empty() { Mat::zeros(n, 0) } else { Mat::from_columns(&cols) };
        Ok((basis, degrees, parities))
    }

    /// Ambient images D(lift) of the page representatives.
    pub fn images(&self) -> &Mat {
        &self.image
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradingResidual {
    pub forward: f64,
    pub adjoint: f64,
}

impl GradingResidual {
    pub fn max(&self) -> f64 {
        self.forward.max(self.adjoint)
    }
}

/// log κ split into the page scalars and the E_∞ → H(D) identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    /// (page index, −½ log sdet'(∂_r*∂_r)) for every page r ≥ `from` with ∂_r ≠ 0.
    pub pages: Vec<(usize, f64)>,
    pub log_pages: f64,
    /// log of the volume distortion of E_∞ representatives lifted to
    /// D-cocycles, measured against the harmonic volume of H(D).
    pub log_identification: f64,
}

impl Kappa {
    pub fn log_total(&self) -> f64 {
        self.log_pages + self.log_identification
    }
}

#[derive(Debug, Clone)]
pub struct SpectralSequence {
    pages: Vec<SSPage>,
    infinity: SSPage,
    ctx: Ctx,
    tol: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSummary {
    pub index: usize,
    pub parity_dims: [usize; 2],
    /// (degree, parity, dim) for nonempty pieces.
    pub graded_dims: Vec<(usize, u8, usize)>,
    pub differential_rank: usize,
    pub km_scalar: f64,
    pub grading_residual: f64,
}

impl SpectralSequence {
    pub fn pages(&self) -> &[SSPage] {
        &self.pages
    }

    pub fn page(&self, r: usize) -> Option<&SSPage> {
        self.pages.get(r)
    }

    /// The stable page after the last possible differential.
    pub fn infinity(&self) -> &SSPage {
        &self.infinity
    }

    /// Index of the last page with a nonzero differential, if any.
    pub fn last_nonzero(&self) -> Option<usize> {
        self.pages.iter().rev().find(|p| !p.is_zero(&self.tol)).map(|p| p.index)
    }

    pub fn summaries(&self) -> Result<Vec<PageSummary>> {
        self.pages
            .iter()
            .map(|p| {
                let sd = p.sdet(&self.tol)?;
                Ok(PageSummary {
                    index: p.index,
                    parity_dims: p.parity_dims(),
                    graded_dims: p.graded_dims().into_iter().map(|((l, q), n)| (l, q, n)).collect(),
                    differential_rank: sd.ranks[0] + sd.ranks[1],
                    km_scalar: -0.5 * sd.log,
                    grading_residual: p.grading_check().max(),
                })
            })
            .collect()
    }

    /// Composite κ : det E_from → det H(D). For flux twists `from` = 2, so
    /// the source is det H(d).
    pub fn kappa(&self, from: usize) -> Result<Kappa> {
        let mut pages = Vec::new();
        let mut log_pages = 0.0;
        for p in self.pages.iter().filter(|p| p.index >= from) {
            if p.is_zero(&self.tol) {
                continue;
            }
            let s = p.km_scalar(&self.tol)?;
            pages.push((p.index, s));
            log_pages += s;
        }
        Ok(Kappa {
            pages,
            log_pages,
            log_identification: self.identification()?,
        })
    }

    /// log|det M₁̄| − log|det M₀̄| where M_p holds harmonic coordinates of the
    /// lifted E_∞ representatives of parity p.
    fn identification(&self) -> Result<f64> {
        let e = &self.infinity;
        let n = e.basis.nrows();
        let mut total = Mat::zeros(n, n);
        for c in self.ctx.comps.values() {
            total += c;
        }
        let lap = total.transpose() * &total + &total * total.transpose();
        let mut lifts = Mat::zeros(n, e.dim());
        let mut by_degree: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (c, &l) in e.degrees.iter().enumerate() {
            by_degree.entry(l).or_default().push(c);
        }
        for (&l, cols) in &by_degree {
            let x0 = Mat::from_columns(&cols.iter().map(|&c| e.basis.column(c).into_owned()).collect::<Vec<_>>());
            let v = self.ctx.lift(&x0, l, self.ctx.max_deg.saturating_sub(l))?;
            for (q, &c) in cols.iter().enumerate() {
                lifts.set_column(c, &v.column(q));
            }
        }
        let mut out = 0.0;
        let spectra: Vec<(Vec<usize>, Vec<f64>, Mat)> = [0u8, 1]
            .iter()
            .map(|&p| {
                let ix: Vec<usize> = (0..n).filter(|&i| self.ctx.par[i] == p).collect();
                let (v, w) = sym_eigen(&submatrix(&lap, &ix, &ix));
                (ix, v, w)
            })
            .collect();
        let all: Vec<f64> = spectra.iter().flat_map(|s| s.1.iter().copied()).collect();
        let thr = zero_threshold(&all, self.tol.rank);
        for (p, (ix, vals, vecs)) in spectra.iter().enumerate() {
            let z = count_zero_below(vals, thr, "harmonic space of D")?;
            let cols: Vec<usize> = (0..e.dim()).filter(|&c| e.parities[c] as usize == p).collect();
            if z != cols.len() {
                return Err(Error::Invalid(format!(
                    "E_∞ has {} classes of parity {p} but H(D) has {z}",
                    cols.len()
                )));
            }
            if z == 0 {
                continue;
            }
            let v = submatrix(&lifts, ix, &cols);
            let h = vecs.columns(0, z).into_owned();
            let ld = log_abs_det(&(h.transpose() * v))
                .ok_or_else(|| Error::Invalid("lifted E_∞ classes are linearly dependent in H(D)".into()))?;
            out += if p == 1 { ld } else { -ld };
        }
        Ok(out)
    }
}

/// Knudsen–Mumford scalar of a complex: −½ log sdet'(∂*∂).
pub fn km_scalar(c: &GradedComplex, m: &MetricStructure, tol: &Tolerances) -> Result<f64> {
    Ok(-0.5 * crate::hodge::sdet_dstar_d(c.differential(), c.space(), m, tol)?.log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{build_torus, FluxForm};

    fn t3_ss(lambda: f64) -> SpectralSequence {
        let m = build_torus(3).unwrap();
        let h = FluxForm::volume(&m, lambda).unwrap();
        let fam = DeformationFamily::from_exterior(&m, &h, MetricStructure::identity(&m.space()), Tolerances::default()).unwrap();
        FilteredComplex::from_family(&fam).unwrap().build_pages().unwrap()
    }

    #[test]
    fn t3_pages() {
        let ss = t3_ss(2.0);
        assert_eq!(ss.page(2).unwrap().parity_dims(), [4, 4]);
        assert_eq!(ss.infinity().parity_dims(), [3, 3]);
        assert_eq!(ss.last_nonzero(), Some(3));
        let p3 = ss.page(3).unwrap();
        assert!(p3.grading_check().max() < 1e-14);
        let k = ss.kappa(2).unwrap();
        assert!((k.log_pages + 2f64.ln()).abs() < 1e-14);
        assert!(k.log_identification.abs() < 1e-14);
    }

    #[test]
    fn untwisted_degenerates() {
        let ss = t3_ss(0.0);
        assert_eq!(ss.last_nonzero(), None);
        assert_eq!(ss.kappa(2).unwrap().log_total(), 0.0);
    }

    #[test]
    fn two_term_km() {
        let s = GradedSpace::from_dims(&[1, 1]).unwrap();
        let d = Mat::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 0.0]);
        let c = GradedComplex::new(s.clone(), d, GradingMode::Z, &Tolerances::default()).unwrap();
        let k = km_scalar(&c, &MetricStructure::identity(&s), &Tolerances::default()).unwrap();
        assert!((k + 3f64.ln()).abs() < 1e-15);
    }
}
