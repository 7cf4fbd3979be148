// NaN must fail validation, hence `!(x > 0.0)` over `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod operator;
pub mod sampling;
pub mod step;
pub mod engine;
pub mod noise;
pub mod recon;
pub mod gallery;

pub use engine::{
    compute_constants_exact, compute_constants_noisy, kstar_upper_bound, landweber_run, run_exact, run_noisy, IterationTrace, SolverConfig, StopMode,
    Terminal, TheoryConstantsExact, TheoryConstantsNoisy, TraceRecord,
};
pub use error::{Error, Result};
pub use gallery::{problem, GalleryOptions, GalleryProblem};
pub use noise::add_noise;
pub use operator::{DomainPolicy, ForwardModel, Operator, Provenance, StabilityCertificate};
pub use recon::{build_lattice, reconstruct_exact, reconstruct_noisy, CompactBox, Lattice, MeasurementOperator, ReconSettings, Reconstruction};
pub use step::{lm_step, morozov_value, select_alpha, solve_shifted_system, StepDiagnostics};
