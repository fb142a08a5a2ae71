use gptrack_core::{GpError, KinematicsError, MpcError, ReferenceError, SimError};
use thiserror::Error;

/// Failure classes with stable process exit codes.
#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    /// Unreadable or malformed input, invalid configuration. Exit 2.
    #[error("input error: {0}")]
    Input(String),
    /// A numerical routine failed. Exit 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A call contract was violated, e.g. predicting backwards in time. Exit 4.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The scenario's assertion block or a metrics comparison failed. Exit 5.
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Contract(_) => 4,
            CliError::Assertion(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

fn gp_class(e: &GpError) -> fn(String) -> CliError {
    match e {
        GpError::InvalidTrainingSet(_) | GpError::InvalidKernel | GpError::InvalidOptions(_) => {
            CliError::Input
        }
        GpError::FactorizationFailure { .. }
        | GpError::NegativeVariance { .. }
        | GpError::NonFinitePrediction { .. }
        | GpError::AllStartsFailed { .. } => CliError::Numerical,
    }
}

fn reference_class(e: &ReferenceError) -> fn(String) -> CliError {
    match e {
        ReferenceError::NonMonotoneTimestamp { .. } | ReferenceError::EmptyWindow { .. } => {
            CliError::Contract
        }
        ReferenceError::InvalidSample(_) | ReferenceError::InvalidGrid(_) => CliError::Input,
        ReferenceError::Channel { source, .. } => gp_class(source),
    }
}

fn sim_class(e: &SimError) -> fn(String) -> CliError {
    match e {
        SimError::InvalidConfig(_) | SimError::NoWarmupData { .. } | SimError::EmptyLog => {
            CliError::Input
        }
        SimError::HyperparameterFit { source, .. } => gp_class(source),
        SimError::PathUnreachable { .. } => CliError::Numerical,
        SimError::Kinematics(k) => match k {
            KinematicsError::InvalidConfig(_) => CliError::Input,
            KinematicsError::EulerSingularity { .. } | KinematicsError::SolveFailure => {
                CliError::Numerical
            }
        },
        SimError::Reference(r) => reference_class(r),
        SimError::Mpc(m) => match m {
            MpcError::DimensionMismatch(_) | MpcError::InvalidConfig(_) => CliError::Input,
            MpcError::NotPositiveDefinite
            | MpcError::Infeasible
            | MpcError::MaxIterations { .. } => CliError::Numerical,
        },
        SimError::Tick { source, .. } => sim_class(source),
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        sim_class(&e)(e.to_string())
    }
}

impl From<ReferenceError> for CliError {
    fn from(e: ReferenceError) -> Self {
        reference_class(&e)(e.to_string())
    }
}

impl From<GpError> for CliError {
    fn from(e: GpError) -> Self {
        gp_class(&e)(e.to_string())
    }
}
