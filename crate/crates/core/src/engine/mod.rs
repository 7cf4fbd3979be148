//! Iteration drivers, theory constants and trace bookkeeping.

pub mod checks;
mod config;
mod landweber;
mod run;
mod theory;
mod trace;

pub use config::{SolverConfig, StopMode};
pub use landweber::{landweber_run, DEFAULT_STEP_FACTOR, DIVERGENCE_FACTOR};
pub use run::{run_exact, run_noisy};
pub use theory::{
    compute_constants_exact, compute_constants_noisy, iterations_for_accuracy, kstar_upper_bound, noisy_r, qtilde,
    qtilde_q_limit, rate_bound, QTilde, TheoryConstantsExact, TheoryConstantsNoisy,
};
pub use trace::{Hypothesis, HypothesisReport, IterationTrace, Method, Terminal, TraceRecord};
