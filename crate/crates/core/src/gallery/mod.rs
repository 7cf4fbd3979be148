//! Small test problems with planted solutions and certified constants.

pub mod estimate;
pub mod operators;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operator::{ForwardModel, Operator, Provenance, StabilityCertificate};
use crate::recon::{compose_measured_model, CompactBox, MeasurementOperator};

pub use estimate::{
    certify, check_tangential_cone, estimate_measured_constants, estimate_stability_constants, rho_prime_for_eta, tangential_cone_eta, verify_certificate,
    CertificateReport, InequalityStats, TangentialConeReport, LIP_FLOOR, SAFETY_FACTOR,
};
pub use operators::{CallCounts, CountingOperator, ExpDecay, LinearMap, QuadraticPerturbation, SabotagedAdjoint, ScalarLinear};

pub const EXP_DECAY_TIMES: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

/// Every id accepted by [`problem`].
pub const PROBLEM_IDS: [&str; 7] =
    ["scalar_linear", "exp_decay", "exp_decay_pair", "quadratic", "quadratic_identity", "diagonal_linear", "sabotaged_adjoint"];

#[derive(Debug, Clone)]
pub struct GalleryProblem {
    pub id: String,
    /// Domain ball: centred in `default_box`, ρ′ of the inscribed ball.
    pub model: ForwardModel,
    pub x_dagger: DVector<f64>,
    /// Suggested local starting point.
    pub x0: DVector<f64>,
    /// Certifies `Q ∘ F` on `default_box` (L̃ for `F`).
    pub certificate: StabilityCertificate,
    pub default_box: CompactBox,
    pub measurement: MeasurementOperator,
    pub notes: String,
}

impl GalleryProblem {
    /// `F(x†)`
    pub fn exact_data(&self) -> DVector<f64> {
        self.model.operator().forward(&self.x_dagger)
    }

    /// `Q(F(x†))`
    pub fn measured_data(&self) -> DVector<f64> {
        self.measurement.matrix() * self.exact_data()
    }

    pub fn measured_model(&self) -> Result<ForwardModel> {
        compose_measured_model(&self.model, &self.measurement)
    }

    /// Re-checks the certificate on `samples` fresh pairs.
    pub fn reverify(&self, samples: usize, seed: u64) -> Result<CertificateReport> {
        verify_certificate(&self.model, &self.measurement, &self.default_box, &self.certificate, samples, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryOptions {
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GalleryOptions {
    fn default() -> Self {
        Self { eps: 1.0, samples: 10_000, seed: 20_240_601 }
    }
}

fn ball_model(op: Arc<dyn Operator>, bx: &CompactBox) -> Result<ForwardModel> {
    ForwardModel::new(op, bx.center(), bx.inscribed_rho_prime())
}

struct ProblemDef {
    id: &'static str,
    op: Arc<dyn Operator>,
    x_dagger: Vec<f64>,
    x0: Vec<f64>,
    bx: CompactBox,
    measurement: Option<MeasurementOperator>,
    notes: &'static str,
}

fn assemble(def: ProblemDef, opts: &GalleryOptions) -> Result<GalleryProblem> {
    let model = ball_model(def.op, &def.bx)?;
    let measurement = def.measurement.unwrap_or_else(|| MeasurementOperator::identity(model.dim_y()));
    let certificate = certify(&model, &measurement, &def.bx, opts.eps, opts.samples, opts.seed)?;
    Ok(GalleryProblem {
        id: def.id.to_string(),
        model,
        x_dagger: DVector::from_vec(def.x_dagger),
        x0: DVector::from_vec(def.x0),
        certificate,
        default_box: def.bx,
        measurement,
        notes: def.notes.to_string(),
    })
}

/// `F(x) = a·x` with x† given and x0 = 0, box `[x† − 1, x† + 1]`.
///
/// For ε = 1 the certificate is closed form: L̂ = L̃ = |a|,
/// C_F = 1/(√2|a|), C̃ = 1/(2|a|). F′ is constant so any L > 0 is valid;
/// L = |a| makes ρ = 2q²/a², so at a = 2, q = ½ the default start sits on
/// the boundary of the ρ-ball. For ε < 1 the constants are estimated.
pub fn scalar_linear(a: f64, x_dagger: f64, opts: &GalleryOptions) -> Result<GalleryProblem> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("slope must be non-zero and finite, got {a}")));
    }
    let bx = CompactBox::from_slices(&[x_dagger - 1.0], &[x_dagger + 1.0])?;
    let op: Arc<dyn Operator> = Arc::new(ScalarLinear { a });
    let notes = "closed-form scalar case; residual contracts by exactly q per step";
    if opts.eps != 1.0 {
        return assemble(ProblemDef { id: "scalar_linear", op, x_dagger: vec![x_dagger], x0: vec![0.0], bx, measurement: None, notes }, opts);
    }
    let model = ball_model(op, &bx)?;
    let s = a.abs();
    let certificate = StabilityCertificate {
        lip_deriv: s,
        jac_bound: s,
        holder_const: 1.0 / (2f64.sqrt() * s),
        holder_eps: 1.0,
        domain_rho_prime: bx.inscribed_rho_prime(),
        forward_lip: s,
        recon_const: 0.5 / s,
        q_norm: 1.0,
        provenance: Provenance::User,
    };
    Ok(GalleryProblem {
        id: "scalar_linear".into(),
        model,
        x_dagger: DVector::from_element(1, x_dagger),
        x0: DVector::zeros(1),
        certificate,
        default_box: bx,
        measurement: MeasurementOperator::identity(1),
        notes: notes.into(),
    })
}

/// `F(x)ᵢ = x₁·exp(−x₂tᵢ)` on `[0.5, 1.5]²`, started from the box centre.
pub fn exp_decay(times: &[f64], x_dagger: [f64; 2], opts: &GalleryOptions) -> Result<GalleryProblem> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 2 {
        return Err(Error::InvalidArgument("exp_decay needs at least two distinct sample times".into()));
    }
    if !(x_dagger[0] > 0.0 && x_dagger[1] > 0.0) {
        return Err(Error::InvalidArgument("exp_decay truth must lie in the positive quadrant".into()));
    }
    let bx = CompactBox::cube(2, 0.5, 1.5)?;
    assemble(
        ProblemDef {
            id: "exp_decay",
            op: Arc::new(ExpDecay::new(times.to_vec())),
            x_dagger: x_dagger.to_vec(),
            x0: vec![1.0, 1.0],
            bx,
            measurement: None,
            notes: "nonlinear amplitude/rate fit; Lipschitz stable on the box",
        },
        opts,
    )
}

/// [`exp_decay`] observed only at the first two sample times.
pub fn exp_decay_pair(opts: &GalleryOptions) -> Result<GalleryProblem> {
    let bx = CompactBox::cube(2, 0.5, 1.5)?;
    let q = MeasurementOperator::selector(EXP_DECAY_TIMES.len(), &[0, 1])?;
    assemble(
        ProblemDef {
            id: "exp_decay_pair",
            op: Arc::new(ExpDecay::new(EXP_DECAY_TIMES.to_vec())),
            x_dagger: vec![1.2, 0.8],
            x0: vec![1.0, 1.0],
            bx,
            measurement: Some(q),
            notes: "finite measurements: two of five samples; global reconstruction on the box",
        },
        opts,
    )
}

/// `F(x) = Ax + η·(x ⊙ x)`. Fails with `CertificationFailed` when the map
/// is not stable on `bx` (η too large) or the certificate does not survive
/// re-verification.
pub fn quadratic_perturbation(
    a: DMatrix<f64>,
    eta: f64,
    bx: CompactBox,
    x_dagger: Vec<f64>,
    x0: Vec<f64>,
    opts: &GalleryOptions,
) -> Result<GalleryProblem> {
    if !a.is_square() || a.nrows() != bx.dim() {
        return Err(Error::InvalidArgument("quadratic model needs a square matrix matching the box".into()));
    }
    let def = ProblemDef {
        id: "quadratic",
        op: Arc::new(QuadraticPerturbation::new(a, eta)),
        x_dagger,
        x0,
        bx,
        measurement: None,
        notes: "linear map plus small componentwise square; Lipschitz stable for small η",
    };
    assemble(def, opts).map_err(|e| match e {
        Error::DegenerateModel(m) => Error::CertificationFailed(format!("η = {eta} too large for the box: {m}")),
        other => other,
    })
}

/// Looks a problem up by id.
pub fn problem(id: &str, opts: &GalleryOptions) -> Result<GalleryProblem> {
    match id {
        "scalar_linear" => scalar_linear(2.0, 0.5, opts),
        "exp_decay" => exp_decay(&EXP_DECAY_TIMES, [1.2, 0.8], opts),
        "exp_decay_pair" => exp_decay_pair(opts),
        "quadratic" => quadratic_perturbation(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.3, 1.5]),
            0.1,
            CompactBox::cube(2, -2.0, 2.0)?,
            vec![0.3, -0.2],
            vec![0.5, -0.4],
            opts,
        ),
        "quadratic_identity" => {
            let mut p = quadratic_perturbation(
                DMatrix::identity(3, 3),
                0.1,
                CompactBox::cube(3, -1.5, 1.5)?,
                vec![0.1, -0.2, 0.15],
                vec![0.0, 0.0, 0.0],
                opts,
            )?;
            p.id = id.into();
            Ok(p)
        }
        "diagonal_linear" => {
            let bx = CompactBox::cube(2, -1.0, 1.0)?;
            assemble(
                ProblemDef {
                    id: "diagonal_linear",
                    op: Arc::new(LinearMap::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0])))),
                    x_dagger: vec![0.4, -0.3],
                    x0: vec![0.0, 0.0],
                    bx,
                    measurement: None,
                    notes: "well-conditioned linear map with unequal singular values",
                },
                opts,
            )
        }
        "sabotaged_adjoint" => {
            let base = problem("quadratic", opts)?;
            let op: Arc<dyn Operator> = Arc::new(SabotagedAdjoint::new(base.model.operator().clone(), 0.01));
            Ok(GalleryProblem {
                id: id.into(),
                model: ForwardModel::new(op, base.model.center().clone(), base.model.radius_sq())?,
                notes: "fault injection: adjoint off by 1%".into(),
                ..base
            })
        }
        other => Err(Error::InvalidArgument(format!("unknown problem id '{other}'; known: {}", PROBLEM_IDS.join(", ")))),
    }
}
