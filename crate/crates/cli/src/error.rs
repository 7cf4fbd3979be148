use lmreg_core::{Error, Terminal};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG_INVALID: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const CONDITION_VIOLATED: i32 = 3;
    pub const NO_CANDIDATE: i32 = 4;
    pub const VERIFY_FAILED: i32 = 5;
    pub const NUMERICAL_FAILURE: i32 = 6;
    pub const IO: i32 = 7;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("trace file: {0}")]
    TraceFormat(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => exit::CONFIG_INVALID,
            CliError::Io(_) | CliError::TraceFormat(_) => exit::IO,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

pub fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::DimensionMismatch { .. } | Error::InvalidArgument(_) | Error::LatticeTooLarge { .. } => exit::CONFIG_INVALID,
        Error::RootInfeasible { .. } | Error::DomainViolation { .. } | Error::ZeroResidual => exit::INFEASIBLE,
        Error::ConditionViolated(_) | Error::DegenerateModel(_) | Error::CertificationFailed(_) => exit::CONDITION_VIOLATED,
        Error::NoCandidateFound { .. } => exit::NO_CANDIDATE,
        Error::FactorizationFailure { .. } | Error::NonConvergence { .. } | Error::DivergenceDetected { .. } => exit::NUMERICAL_FAILURE,
    }
}

pub fn terminal_exit_code(t: Terminal) -> i32 {
    match t {
        Terminal::BudgetExhausted | Terminal::ZeroResidual | Terminal::DiscrepancyStop | Terminal::TargetReached => exit::OK,
        Terminal::RootInfeasible | Terminal::DomainViolation => exit::INFEASIBLE,
        Terminal::Diverged | Terminal::AlphaNonConvergence => exit::NUMERICAL_FAILURE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_codes_are_total() {
        for t in Terminal::ALL {
            let code = terminal_exit_code(t);
            assert_eq!(code == exit::OK, t.is_clean(), "{t}");
        }
    }
}
