//! Reconstruction from finitely many measurements.

mod algorithms;
mod lattice;
mod measurement;

pub use algorithms::{reconstruct_exact, reconstruct_noisy, ReconSettings, Reconstruction, ScanStrategy, ScanSummary};
pub use lattice::{
    build_lattice, build_lattice_with_cap, lattice_radius, scan_exhaustive, scan_for_initial_guess, scan_pruned, CompactBox,
    Lattice, ScanHit, DEFAULT_LATTICE_CAP, EXHAUSTIVE_SCAN_CAP,
};
pub use measurement::{compose_measured_model, MeasuredOperator, MeasurementOperator};
