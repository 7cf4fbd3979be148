//! Global reconstruction from finite measurements: certify a starting point
//! on a lattice covering the box, then iterate from it.

use nalgebra::DVector;

use super::lattice::{build_lattice_with_cap, lattice_radius, scan_exhaustive, scan_pruned, CompactBox, ScanHit, EXHAUSTIVE_SCAN_CAP};
use super::measurement::{compose_measured_model, MeasurementOperator};
use crate::engine::{compute_constants_exact, compute_constants_noisy, run_exact, run_noisy, HypothesisReport, IterationTrace, SolverConfig};
use crate::error::{ensure_dim, Result};
use crate::operator::{ForwardModel, StabilityCertificate};
use crate::step::DEFAULT_TOL_ALPHA;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanStrategy {
    Exhaustive,
    Pruned,
    /// Exhaustive up to [`EXHAUSTIVE_SCAN_CAP`] points, pruned above.
    Auto,
}

impl ScanStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanStrategy::Exhaustive => "exhaustive",
            ScanStrategy::Pruned => "pruned",
            ScanStrategy::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconSettings {
    pub q: f64,
    pub tol_alpha: f64,
    /// Largest admissible lattice. Points are never stored, so this can far
    /// exceed what an exhaustive scan could visit.
    pub lattice_cap: u128,
    pub strategy: ScanStrategy,
    /// Exact runs stop once `‖r‖ ≤ relative_residual_floor·‖y‖`.
    pub relative_residual_floor: f64,
}

impl Default for ReconSettings {
    fn default() -> Self {
        Self {
            q: 0.5,
            tol_alpha: DEFAULT_TOL_ALPHA,
            lattice_cap: 1_000_000_000_000_000,
            strategy: ScanStrategy::Auto,
            relative_residual_floor: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    pub lattice_points: u128,
    pub counts: Vec<u64>,
    /// Radius requested from the certificate.
    pub radius: f64,
    /// Half cell diagonal actually achieved.
    pub covering_radius: f64,
    /// `ρ/(2C̃)`
    pub threshold: f64,
    pub rho: f64,
    pub strategy: ScanStrategy,
    pub hit: ScanHit,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub x: DVector<f64>,
    pub trace: IterationTrace,
    pub scan: ScanSummary,
    /// Iteration budget M.
    pub budget: usize,
    /// Assumptions of the reconstruction itself, beyond the run's hypotheses.
    pub assumptions: HypothesisReport,
}

impl Reconstruction {
    pub fn x0(&self) -> &DVector<f64> {
        &self.scan.hit.point
    }
}

fn scan(
    measured: &ForwardModel,
    bx: &CompactBox,
    cert: &StabilityCertificate,
    q_op: &MeasurementOperator,
    y_obs: &DVector<f64>,
    rho: f64,
    settings: &ReconSettings,
) -> Result<ScanSummary> {
    ensure_dim(measured.dim_x(), bx.dim())?;
    let radius = lattice_radius(cert, rho);
    let lattice = build_lattice_with_cap(bx, radius, settings.lattice_cap)?;
    let threshold = rho / (2.0 * cert.recon_const);
    let strategy = match settings.strategy {
        ScanStrategy::Auto if lattice.len() <= EXHAUSTIVE_SCAN_CAP => ScanStrategy::Exhaustive,
        ScanStrategy::Auto => ScanStrategy::Pruned,
        s => s,
    };
    let hit = match strategy {
        ScanStrategy::Exhaustive => scan_exhaustive(&lattice, measured, y_obs, threshold)?,
        _ => {
            let lip = cert.forward_lip * cert.q_norm.max(q_op.operator_norm());
            scan_pruned(&lattice, measured, y_obs, threshold, lip)?
        }
    };
    Ok(ScanSummary {
        lattice_points: lattice.len(),
        counts: lattice.counts().to_vec(),
        radius,
        covering_radius: lattice.covering_radius(),
        threshold,
        rho,
        strategy,
        hit,
    })
}

/// Reconstruction from exact measurements `y_obs = Q(F(x†))`.
///
/// `cert` must certify `Q ∘ F` on `bx` (with L̃ for `F`). Runs
/// `M = iterations_for_accuracy(target_gamma)` steps from the scanned point,
/// stopping early if the residual reaches the relative floor.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_exact(
    model: &ForwardModel,
    q_op: &MeasurementOperator,
    bx: &CompactBox,
    cert: &StabilityCertificate,
    y_obs: &DVector<f64>,
    target_gamma: f64,
    settings: &ReconSettings,
    x_dagger: Option<&DVector<f64>>,
) -> Result<Reconstruction> {
    let measured = compose_measured_model(model, q_op)?;
    ensure_dim(measured.dim_y(), y_obs.len())?;
    let tc = compute_constants_exact(cert, settings.q)?;
    let scan = scan(&measured, bx, cert, q_op, y_obs, tc.rho, settings)?;
    let x0 = scan.hit.point.clone();
    let run_model = measured.recentered(x0.clone())?.with_radius_sq(cert.domain_rho_prime)?;
    let budget = tc.iterations_for_accuracy(target_gamma);
    let cfg = SolverConfig {
        tol_alpha: settings.tol_alpha,
        residual_floor: settings.relative_residual_floor * y_obs.norm(),
        ..SolverConfig::exact(settings.q, budget)
    };
    let trace = run_exact(&run_model, x_dagger, y_obs, &x0, &cfg, Some(&tc))?;
    let mut assumptions = HypothesisReport::default();
    assumptions.push("x_dagger_in_box", x_dagger.is_none_or(|xd| bx.contains(xd)), "planted truth inside K");
    Ok(Reconstruction { x: trace.final_x().clone(), trace, scan, budget, assumptions })
}

/// Reconstruction from noisy measurements with `‖y_delta − Q(F(x†))‖ ≤ δ`.
///
/// The scan reuses the exact-data threshold against `y_delta`; whether δ
/// stays below that threshold is recorded as an assumption, not enforced.
/// The run stops by the discrepancy principle or after `max_iters` steps.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct_noisy(
    model: &ForwardModel,
    q_op: &MeasurementOperator,
    bx: &CompactBox,
    cert: &StabilityCertificate,
    y_delta: &DVector<f64>,
    tau: f64,
    delta: f64,
    max_iters: usize,
    settings: &ReconSettings,
    x_dagger: Option<&DVector<f64>>,
) -> Result<Reconstruction> {
    let measured = compose_measured_model(model, q_op)?;
    ensure_dim(measured.dim_y(), y_delta.len())?;
    let tc = compute_constants_noisy(cert, settings.q, tau)?;
    let scan = scan(&measured, bx, cert, q_op, y_delta, tc.rho, settings)?;
    let x0 = scan.hit.point.clone();
    let run_model = measured.recentered(x0.clone())?.with_radius_sq(cert.domain_rho_prime)?;
    let cfg = SolverConfig { tol_alpha: settings.tol_alpha, ..SolverConfig::noisy(settings.q, tau, delta, max_iters) };
    let mut trace = run_noisy(&run_model, x_dagger, y_delta, &x0, &cfg, Some(&tc))?;
    let mut assumptions = HypothesisReport::default();
    let margin_ok = delta <= scan.threshold;
    assumptions.push("noise_within_scan_threshold", margin_ok, format!("δ = {delta:e}, threshold = {:e}", scan.threshold));
    if !margin_ok {
        trace.warnings.push(format!("δ = {delta:e} exceeds the scan threshold {:e}", scan.threshold));
    }
    assumptions.push("x_dagger_in_box", x_dagger.is_none_or(|xd| bx.contains(xd)), "planted truth inside K");
    Ok(Reconstruction { x: trace.final_x().clone(), trace, scan, budget: max_iters, assumptions })
}
