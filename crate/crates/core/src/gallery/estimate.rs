//! Brute-force estimation and re-verification of stability constants over a
//! box.
//!
//! Points come from three sources: uniform random pairs, every pair of a
//! coarse grid that includes the box corners, and short local pairs (random,
//! axis-aligned, and along the least-sensitive Jacobian direction). Local
//! pairs approach the suprema that are attained in the limit of coincident
//! points, which random pairs essentially never see.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::operator::{ForwardModel, Provenance, StabilityCertificate};
use crate::recon::{compose_measured_model, CompactBox, MeasurementOperator};
use crate::sampling::{self, SeededRng};

pub const SAFETY_FACTOR: f64 = 1.05;

/// Floor for L on models whose derivative does not vary.
pub const LIP_FLOOR: f64 = 1e-12;

/// Target size of the deterministic grid.
const GRID_POINTS: f64 = 200.0;

/// Local pair length relative to the smallest box width.
const LOCAL_STEP: f64 = 1e-4;

/// Relative slack when re-checking inequalities.
const VERIFY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Maxima {
    lip_deriv: f64,
    jac_bound: f64,
    holder_const: f64,
    forward_lip: f64,
    recon_const: f64,
}

impl Maxima {
    fn merge(self, o: Maxima) -> Maxima {
        Maxima {
            lip_deriv: self.lip_deriv.max(o.lip_deriv),
            jac_bound: self.jac_bound.max(o.jac_bound),
            holder_const: self.holder_const.max(o.holder_const),
            forward_lip: self.forward_lip.max(o.forward_lip),
            recon_const: self.recon_const.max(o.recon_const),
        }
    }
}

/// Per-point data shared by all pairs touching it.
struct Sampled {
    x: DVector<f64>,
    /// F(x)
    fx: DVector<f64>,
    /// Q(F(x))
    qfx: DVector<f64>,
    /// Jacobian of Q∘F
    jac: DMatrix<f64>,
}

fn evaluate(model: &ForwardModel, q: &MeasurementOperator, points: Vec<DVector<f64>>) -> Result<Vec<Sampled>> {
    let measured = compose_measured_model(model, q)?;
    Ok(points
        .into_par_iter()
        .map(|x| {
            let fx = model.operator().forward(&x);
            let qfx = q.matrix() * &fx;
            let jac = measured.operator().jacobian(&x);
            Sampled { x, fx, qfx, jac }
        })
        .collect())
}

fn clamp_into(bx: &CompactBox, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(bx.lower()[i], bx.upper()[i])))
}

/// `x + h·d`, flipped to `x − h·d` if that leaves the box, clamped as a last
/// resort.
fn local_partner(bx: &CompactBox, x: &DVector<f64>, d: &DVector<f64>, h: f64) -> DVector<f64> {
    let plus = x + d * h;
    if bx.contains(&plus) {
        return plus;
    }
    let minus = x - d * h;
    if bx.contains(&minus) {
        return minus;
    }
    clamp_into(bx, &plus)
}

fn unit(mut v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v
}

fn grid_points(bx: &CompactBox) -> Vec<DVector<f64>> {
    let n = bx.dim();
    let per_axis = (GRID_POINTS.powf(1.0 / n as f64).floor() as usize).max(2);
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut x = DVector::zeros(n);
            for i in (0..n).rev() {
                let j = idx % per_axis;
                idx /= per_axis;
                x[i] = bx.lower()[i] + (bx.upper()[i] - bx.lower()[i]) * j as f64 / (per_axis - 1) as f64;
            }
            x
        })
        .collect()
}

/// Right singular vector of the smallest singular value.
fn weakest_direction(jac: &DMatrix<f64>) -> Option<DVector<f64>> {
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t?;
    let (k, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    // v_t rows are right singular vectors
    Some(v_t.row(k).transpose())
}

type PairSet = (Vec<Sampled>, Vec<(usize, usize)>);

/// Builds the point set and the list of index pairs.
fn build_pairs(
    model: &ForwardModel,
    q: &MeasurementOperator,
    bx: &CompactBox,
    samples: usize,
    seed: u64,
    with_grid: bool,
) -> Result<PairSet> {
    let mut rng: SeededRng = sampling::rng(seed);
    let n = bx.dim();
    let mut points = Vec::new();
    let mut pairs = Vec::new();

    for _ in 0..samples {
        let a = sampling::uniform_in_box(&mut rng, bx.lower(), bx.upper());
        let b = sampling::uniform_in_box(&mut rng, bx.lower(), bx.upper());
        pairs.push((points.len(), points.len() + 1));
        points.push(a);
        points.push(b);
    }

    let mut bases: Vec<DVector<f64>> = (0..samples).map(|_| sampling::uniform_in_box(&mut rng, bx.lower(), bx.upper())).collect();
    if with_grid {
        let grid = grid_points(bx);
        let start = points.len();
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                pairs.push((start + i, start + j));
            }
        }
        points.extend(grid.iter().cloned());
        bases.extend(grid);
    }

    let min_width = bx.widths().iter().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
    let h = if min_width.is_finite() { LOCAL_STEP * min_width } else { LOCAL_STEP };
    let base_data = evaluate(model, q, bases)?;
    let mut partners = Vec::new();
    for s in &base_data {
        let mut dirs = vec![unit(sampling::gaussian(&mut rng, n))];
        if let Some(d) = weakest_direction(&s.jac) {
            dirs.push(d);
        }
        if with_grid {
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                dirs.push(e);
            }
        }
        for d in dirs {
            partners.push((s.x.clone(), local_partner(bx, &s.x, &d, h)));
        }
    }
    for (a, b) in partners {
        pairs.push((points.len(), points.len() + 1));
        points.push(a);
        points.push(b);
    }
    Ok((evaluate(model, q, points)?, pairs))
}

fn pair_maxima(a: &Sampled, b: &Sampled, power: f64) -> Result<Maxima> {
    let dx = (&a.x - &b.x).norm();
    let mut m = Maxima { jac_bound: spectral_norm(&a.jac).max(spectral_norm(&b.jac)), ..Maxima::default() };
    if dx == 0.0 {
        return Ok(m);
    }
    let dqf = (&a.qfx - &b.qfx).norm();
    if dqf == 0.0 {
        return Err(Error::DegenerateModel(format!("{:?} and {:?}", a.x.as_slice(), b.x.as_slice())));
    }
    m.lip_deriv = spectral_norm(&(&a.jac - &b.jac)) / dx;
    m.holder_const = std::f64::consts::FRAC_1_SQRT_2 * dx / dqf.powf(power);
    m.forward_lip = (&a.fx - &b.fx).norm() / dx;
    m.recon_const = 0.5 * dx / dqf;
    Ok(m)
}

/// Oracle estimate of every constant for `F` on `bx` (measurement `Q = I`).
pub fn estimate_stability_constants(model: &ForwardModel, bx: &CompactBox, eps: f64, samples: usize, seed: u64) -> Result<StabilityCertificate> {
    estimate_measured_constants(model, &MeasurementOperator::identity(model.dim_y()), bx, eps, samples, seed)
}

/// Oracle estimate for `Q ∘ F` on `bx`. L, L̂, C_F and C̃ refer to `Q ∘ F`,
/// L̃ to `F`. Each maximum is inflated by [`SAFETY_FACTOR`]; ρ′ is that of the
/// ball inscribed in the box.
pub fn estimate_measured_constants(
    model: &ForwardModel,
    q: &MeasurementOperator,
    bx: &CompactBox,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<StabilityCertificate> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("Hölder exponent ε must lie in (0, 1], got {eps}")));
    }
    if bx.dim() != model.dim_x() {
        return Err(Error::DimensionMismatch { expected: model.dim_x(), found: bx.dim() });
    }
    let (pts, pairs) = build_pairs(model, q, bx, samples, seed, true)?;
    let power = 0.5 * (1.0 + eps);
    let raw = pairs
        .par_iter()
        .map(|&(i, j)| pair_maxima(&pts[i], &pts[j], power))
        .try_reduce(Maxima::default, |a, b| Ok(a.merge(b)))?;
    let cert = StabilityCertificate {
        lip_deriv: (raw.lip_deriv * SAFETY_FACTOR).max(LIP_FLOOR),
        jac_bound: raw.jac_bound * SAFETY_FACTOR,
        holder_const: raw.holder_const * SAFETY_FACTOR,
        holder_eps: eps,
        domain_rho_prime: bx.inscribed_rho_prime(),
        forward_lip: raw.forward_lip * SAFETY_FACTOR,
        recon_const: raw.recon_const * SAFETY_FACTOR,
        q_norm: q.operator_norm(),
        provenance: Provenance::OracleEstimated,
    };
    cert.validate()?;
    Ok(cert)
}

/// Worst observed ratio `value / allowed` and violation count for one
/// inequality.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InequalityStats {
    pub worst_ratio: f64,
    pub violations: usize,
}

impl InequalityStats {
    fn record(&mut self, value: f64, allowed: f64) {
        let ratio = if allowed > 0.0 { value / allowed } else if value > 0.0 { f64::INFINITY } else { 0.0 };
        self.worst_ratio = self.worst_ratio.max(ratio);
        if ratio > 1.0 + VERIFY_SLACK {
            self.violations += 1;
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.worst_ratio = self.worst_ratio.max(o.worst_ratio);
        self.violations += o.violations;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertificateReport {
    pub pairs: usize,
    /// `‖F′(x) − F′(x̃)‖ ≤ L‖x − x̃‖`
    pub lip_deriv: InequalityStats,
    /// `‖F′(x)‖ ≤ L̂`
    pub jac_bound: InequalityStats,
    /// `(1/√2)‖x − x̃‖ ≤ C_F‖F(x) − F(x̃)‖^((1+ε)/2)`
    pub holder: InequalityStats,
    /// `‖F(x) − F(x̃)‖ ≤ L̃‖x − x̃‖`
    pub forward_lip: InequalityStats,
    /// `‖x − x̃‖ ≤ 2C̃‖Q(F(x)) − Q(F(x̃))‖`
    pub recon: InequalityStats,
}

impl CertificateReport {
    pub fn violations(&self) -> usize {
        self.lip_deriv.violations + self.jac_bound.violations + self.holder.violations + self.forward_lip.violations + self.recon.violations
    }

    pub fn passes(&self) -> bool {
        self.violations() == 0
    }

    fn merge(self, o: Self) -> Self {
        Self {
            pairs: self.pairs + o.pairs,
            lip_deriv: self.lip_deriv.merge(o.lip_deriv),
            jac_bound: self.jac_bound.merge(o.jac_bound),
            holder: self.holder.merge(o.holder),
            forward_lip: self.forward_lip.merge(o.forward_lip),
            recon: self.recon.merge(o.recon),
        }
    }
}

/// Re-checks every inequality of `cert` on `samples` fresh random pairs plus
/// as many fresh local pairs.
pub fn verify_certificate(
    model: &ForwardModel,
    q: &MeasurementOperator,
    bx: &CompactBox,
    cert: &StabilityCertificate,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport> {
    cert.validate()?;
    let (pts, pairs) = build_pairs(model, q, bx, samples, seed, false)?;
    let power = cert.holder_power();
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&pts[i], &pts[j]);
            let mut r = CertificateReport { pairs: 1, ..CertificateReport::default() };
            r.jac_bound.record(spectral_norm(&a.jac).max(spectral_norm(&b.jac)), cert.jac_bound);
            let dx = (&a.x - &b.x).norm();
            if dx > 0.0 {
                let dqf = (&a.qfx - &b.qfx).norm();
                r.lip_deriv.record(spectral_norm(&(&a.jac - &b.jac)), cert.lip_deriv * dx);
                r.holder.record(std::f64::consts::FRAC_1_SQRT_2 * dx, cert.holder_const * dqf.powf(power));
                r.forward_lip.record((&a.fx - &b.fx).norm(), cert.forward_lip * dx);
                r.recon.record(dx, 2.0 * cert.recon_const * dqf);
            }
            r
        })
        .reduce(CertificateReport::default, CertificateReport::merge))
}

/// Estimates a certificate and immediately re-verifies it on a second seed.
pub fn certify(
    model: &ForwardModel,
    q: &MeasurementOperator,
    bx: &CompactBox,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<StabilityCertificate> {
    let cert = estimate_measured_constants(model, q, bx, eps, samples, seed)?;
    let report = verify_certificate(model, q, bx, &cert, samples, seed.wrapping_add(1))?;
    if !report.passes() {
        return Err(Error::CertificationFailed(format!("{} sampled violations on re-verification", report.violations())));
    }
    Ok(cert)
}

/// `η_tc = (L/2)·(2√(2ρ′))^(2ε/(1+ε))·(√2·C_F)^(2/(1+ε))`
pub fn tangential_cone_eta(cert: &StabilityCertificate, rho_prime: f64) -> f64 {
    let eps = cert.holder_eps;
    let a = 2.0 * eps / (1.0 + eps);
    let b = 2.0 / (1.0 + eps);
    0.5 * cert.lip_deriv * (2.0 * (2.0 * rho_prime).sqrt()).powf(a) * (2f64.sqrt() * cert.holder_const).powf(b)
}

/// The ρ′ at which [`tangential_cone_eta`] equals `eta`.
pub fn rho_prime_for_eta(cert: &StabilityCertificate, eta: f64) -> f64 {
    let eps = cert.holder_eps;
    let a = 2.0 * eps / (1.0 + eps);
    let b = 2.0 / (1.0 + eps);
    let diameter = (2.0 * eta / (cert.lip_deriv * (2f64.sqrt() * cert.holder_const).powf(b))).powf(1.0 / a);
    let r = 0.5 * diameter;
    0.5 * r * r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentialConeReport {
    pub eta: f64,
    pub rho_prime: f64,
    pub samples: usize,
    pub violations: usize,
    /// Largest `‖F(x) − F(x̃) − F′(x̃)(x − x̃)‖ / ‖F(x) − F(x̃)‖` seen.
    pub worst_ratio: f64,
}

impl TangentialConeReport {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Samples pairs in the ball `½‖x − center‖² ≤ rho_prime` and checks the
/// tangential cone inequality with the η derived from the certificate.
pub fn check_tangential_cone(
    model: &ForwardModel,
    cert: &StabilityCertificate,
    center: &DVector<f64>,
    rho_prime: f64,
    samples: usize,
    seed: u64,
) -> Result<TangentialConeReport> {
    if center.len() != model.dim_x() {
        return Err(Error::DimensionMismatch { expected: model.dim_x(), found: center.len() });
    }
    let eta = tangential_cone_eta(cert, rho_prime);
    let radius = (2.0 * rho_prime).sqrt();
    let mut rng = sampling::rng(seed);
    let pairs: Vec<_> = (0..samples)
        .map(|_| (sampling::uniform_in_ball(&mut rng, center, radius), sampling::uniform_in_ball(&mut rng, center, radius)))
        .collect();
    let op = model.operator();
    let (violations, worst_ratio) = pairs
        .par_iter()
        .map(|(x, xt)| {
            let df = op.forward(x) - op.forward(xt);
            let lin = &df - op.jacobian_apply(xt, &(x - xt));
            let (num, den) = (lin.norm(), df.norm());
            let ratio = if den > 0.0 { num / den } else { 0.0 };
            (usize::from(num > eta * den * (1.0 + VERIFY_SLACK)), ratio)
        })
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
    Ok(TangentialConeReport { eta, rho_prime, samples, violations, worst_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::operators::{LinearMap, ScalarLinear};

    #[test]
    fn scalar_raw_values_inflated() {
        let m = ForwardModel::from_operator(ScalarLinear { a: 2.0 }, DVector::from_element(1, 0.5), 0.5).unwrap();
        let bx = CompactBox::cube(1, -0.5, 1.5).unwrap();
        let c = estimate_stability_constants(&m, &bx, 1.0, 10_000, 3).unwrap();
        let expect_cf = 1.05 / (2.0 * 2f64.sqrt());
        assert!((c.holder_const - expect_cf).abs() < 1e-9 * expect_cf, "{}", c.holder_const);
        assert!((c.jac_bound - 2.1).abs() < 1e-12);
        assert!((c.forward_lip - 2.1).abs() < 1e-9);
        assert_eq!(c.lip_deriv, LIP_FLOOR);
    }

    #[test]
    fn linear_map_has_no_curvature() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 2.0]);
        let m = ForwardModel::from_operator(LinearMap::new(a), DVector::zeros(2), 1.0).unwrap();
        let bx = CompactBox::cube(2, -1.0, 1.0).unwrap();
        let c = estimate_stability_constants(&m, &bx, 1.0, 10_000, 3).unwrap();
        assert!(c.lip_deriv <= LIP_FLOOR);
    }

    #[test]
    fn collapsing_map_is_degenerate() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let m = ForwardModel::from_operator(LinearMap::new(a), DVector::zeros(2), 1.0).unwrap();
        let bx = CompactBox::cube(2, -1.0, 1.0).unwrap();
        assert!(matches!(estimate_stability_constants(&m, &bx, 1.0, 10_000, 3), Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn eta_inverse() {
        let cert = StabilityCertificate {
            lip_deriv: 0.3,
            jac_bound: 2.0,
            holder_const: 0.9,
            holder_eps: 0.5,
            domain_rho_prime: 1.0,
            forward_lip: 2.0,
            recon_const: 0.7,
            q_norm: 1.0,
            provenance: Provenance::User,
        };
        let rp = rho_prime_for_eta(&cert, 0.5);
        assert!((tangential_cone_eta(&cert, rp) - 0.5).abs() < 1e-12);
    }
}
