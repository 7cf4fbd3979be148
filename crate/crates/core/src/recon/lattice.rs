//! Axis-aligned boxes, their cell-centred lattices, and the search for a
//! lattice point whose measured image is close to the data.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{ensure_dim, Error, Result};
use crate::operator::{ForwardModel, StabilityCertificate};

/// Default cap on lattice size for [`build_lattice`].
pub const DEFAULT_LATTICE_CAP: u128 = 10_000_000;

/// Largest lattice the exhaustive scan will enumerate.
pub const EXHAUSTIVE_SCAN_CAP: u128 = 10_000_000;

/// The compact set `K = [lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl CompactBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        ensure_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box has no dimensions".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] <= upper[i]) {
                return Err(Error::InvalidArgument(format!("box axis {i}: need finite lower ≤ upper, got [{}, {}]", lower[i], upper[i])));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(DVector::from_row_slice(lower), DVector::from_row_slice(upper))
    }

    /// `[lo, hi]ⁿ`
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && (0..self.dim()).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    /// Radius of the largest ball centred in the box.
    pub fn inscribed_radius(&self) -> f64 {
        self.widths().min() * 0.5
    }

    /// ρ′ of the inscribed ball, `½·r²`.
    pub fn inscribed_rho_prime(&self) -> f64 {
        let r = self.inscribed_radius();
        0.5 * r * r
    }
}

/// A uniform cell-centred grid over a box, addressed by a lexicographic
/// index with axis 0 most significant. Points are generated on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    lower: DVector<f64>,
    spacing: DVector<f64>,
    counts: Vec<u64>,
    covering_radius: f64,
}

impl Lattice {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn spacing(&self) -> &DVector<f64> {
        &self.spacing
    }

    /// Half the cell diagonal.
    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    pub fn len(&self) -> u128 {
        self.counts.iter().map(|&c| c as u128).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point_at(&self, multi: &[u64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| self.lower[i] + (multi[i] as f64 + 0.5) * self.spacing[i]),
        )
    }

    pub fn multi_index(&self, mut index: u128) -> Vec<u64> {
        let mut multi = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            let c = self.counts[i] as u128;
            multi[i] = (index % c) as u64;
            index /= c;
        }
        multi
    }

    pub fn flat_index(&self, multi: &[u64]) -> u128 {
        multi.iter().zip(&self.counts).fold(0u128, |acc, (&j, &c)| acc * c as u128 + j as u128)
    }

    pub fn point(&self, index: u128) -> DVector<f64> {
        self.point_at(&self.multi_index(index))
    }

    /// All points in index order. Only sensible for small lattices.
    pub fn points(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

/// `min(ρ/(2·L̃·C̃·‖Q‖), √(2ρ))`
pub fn lattice_radius(cert: &StabilityCertificate, rho: f64) -> f64 {
    let from_constants = rho / (2.0 * cert.forward_lip * cert.recon_const * cert.q_norm);
    from_constants.min((2.0 * rho).sqrt())
}

/// Lattice with per-axis spacing at most `2·r_cover/√n`, capped at
/// [`DEFAULT_LATTICE_CAP`] points.
pub fn build_lattice(bx: &CompactBox, r_cover: f64) -> Result<Lattice> {
    build_lattice_with_cap(bx, r_cover, DEFAULT_LATTICE_CAP)
}

pub fn build_lattice_with_cap(bx: &CompactBox, r_cover: f64, cap: u128) -> Result<Lattice> {
    if !(r_cover > 0.0) || !r_cover.is_finite() {
        return Err(Error::InvalidArgument(format!("covering radius must be positive, got {r_cover}")));
    }
    let n = bx.dim();
    let h = 2.0 * r_cover / (n as f64).sqrt();
    let widths = bx.widths();
    let mut counts = Vec::with_capacity(n);
    let mut total = 1.0_f64;
    for w in widths.iter() {
        let c = (w / h).ceil().max(1.0);
        total *= c;
        counts.push(c);
    }
    if total > cap as f64 || total > u128::MAX as f64 {
        return Err(Error::LatticeTooLarge { count: total.min(u128::MAX as f64) as u128, cap });
    }
    let counts: Vec<u64> = counts.into_iter().map(|c| c as u64).collect();
    let spacing = DVector::from_iterator(n, widths.iter().zip(&counts).map(|(w, &c)| w / c as f64));
    let covering_radius = 0.5 * spacing.norm();
    Ok(Lattice { lower: bx.lower().clone(), spacing, counts, covering_radius })
}

/// A lattice point accepted by the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanHit {
    pub index: u128,
    pub point: DVector<f64>,
    /// `‖Q(F(x)) − y_obs‖`
    pub misfit: f64,
    /// Forward evaluations spent; for the exhaustive scan, the number of
    /// points up to and including the hit.
    pub evaluations: u64,
}

fn misfit(model: &ForwardModel, x: &DVector<f64>, y_obs: &DVector<f64>) -> Result<f64> {
    Ok((model.forward_unchecked(x)? - y_obs).norm())
}

/// First lattice point, in index order, with `‖Q(F(x)) − y_obs‖ < threshold`.
///
/// Enumerates every point in parallel; the result does not depend on the
/// thread count.
pub fn scan_for_initial_guess(lattice: &Lattice, measured: &ForwardModel, y_obs: &DVector<f64>, threshold: f64) -> Result<DVector<f64>> {
    Ok(scan_exhaustive(lattice, measured, y_obs, threshold)?.point)
}

pub fn scan_exhaustive(lattice: &Lattice, measured: &ForwardModel, y_obs: &DVector<f64>, threshold: f64) -> Result<ScanHit> {
    ensure_dim(measured.dim_x(), lattice.dim())?;
    ensure_dim(measured.dim_y(), y_obs.len())?;
    let count = lattice.len();
    if count > EXHAUSTIVE_SCAN_CAP {
        return Err(Error::LatticeTooLarge { count, cap: EXHAUSTIVE_SCAN_CAP });
    }
    let hit = (0..count as u64).into_par_iter().find_map_first(|i| {
        let x = lattice.point(i as u128);
        let m = (measured.operator().forward(&x) - y_obs).norm();
        (m < threshold).then_some((i, x, m))
    });
    match hit {
        Some((i, point, misfit)) => Ok(ScanHit { index: i as u128, point, misfit, evaluations: i + 1 }),
        None => Err(Error::NoCandidateFound { threshold }),
    }
}

/// Same answer as [`scan_exhaustive`], found by branch and bound.
///
/// Index boxes are split along their physically longest axis. A box whose
/// lattice points span a ball of radius `R` around its midpoint `c` is
/// discarded when `‖Q(F(c)) − y‖ − lip·R ≥ threshold`, with `lip` a Lipschitz
/// constant of `Q ∘ F` on the box; it is also discarded when its smallest
/// index cannot beat the best hit so far.
pub fn scan_pruned(lattice: &Lattice, measured: &ForwardModel, y_obs: &DVector<f64>, threshold: f64, lip: f64) -> Result<ScanHit> {
    ensure_dim(measured.dim_x(), lattice.dim())?;
    ensure_dim(measured.dim_y(), y_obs.len())?;
    if !(lip >= 0.0) || !lip.is_finite() {
        return Err(Error::InvalidArgument(format!("Lipschitz bound must be finite and non-negative, got {lip}")));
    }
    let lip = lip * (1.0 + 1e-9);
    let n = lattice.dim();
    let mut best: Option<(u128, DVector<f64>, f64)> = None;
    let mut evaluations = 0u64;
    let mut stack = vec![(vec![0u64; n], lattice.counts.iter().map(|c| c - 1).collect::<Vec<u64>>())];

    while let Some((lo, hi)) = stack.pop() {
        let first = lattice.flat_index(&lo);
        if matches!(&best, Some((b, _, _)) if first >= *b) {
            continue;
        }
        let p_lo = lattice.point_at(&lo);
        let p_hi = lattice.point_at(&hi);
        if lo == hi {
            evaluations += 1;
            let m = misfit(measured, &p_lo, y_obs)?;
            if m < threshold {
                best = Some((first, p_lo, m));
            }
            continue;
        }
        let c = (&p_lo + &p_hi) * 0.5;
        let radius = 0.5 * (&p_hi - &p_lo).norm();
        evaluations += 1;
        if misfit(measured, &c, y_obs)? - lip * radius >= threshold {
            continue;
        }
        // longest physical extent, lowest axis on ties
        let axis = (0..n)
            .filter(|&i| hi[i] > lo[i])
            .max_by(|&a, &b| {
                let ea = (hi[a] - lo[a]) as f64 * lattice.spacing[a];
                let eb = (hi[b] - lo[b]) as f64 * lattice.spacing[b];
                ea.total_cmp(&eb).then(b.cmp(&a))
            })
            .expect("a non-singleton box has a splittable axis");
        let mid = lo[axis] + (hi[axis] - lo[axis]) / 2;
        let mut left_hi = hi.clone();
        left_hi[axis] = mid;
        let mut right_lo = lo.clone();
        right_lo[axis] = mid + 1;
        // lower half popped first
        stack.push((right_lo, hi));
        stack.push((lo, left_hi));
    }
    match best {
        Some((index, point, misfit)) => Ok(ScanHit { index, point, misfit, evaluations }),
        None => Err(Error::NoCandidateFound { threshold }),
    }
}
