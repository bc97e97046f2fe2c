use thiserror::Error;

/// Errors raised by the dynamics, solver and construction routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("state does not match system: {0}")]
    DimensionMismatch(String),

    #[error("collision between bodies {i} and {j} (separation {separation:e}, floor {floor:e})")]
    Collision {
        i: usize,
        j: usize,
        separation: f64,
        floor: f64,
    },

    #[error("angular momentum is undefined in dimension {0}")]
    UnsupportedDimension(usize),

    #[error("central configuration solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("seed kind {kind} is incompatible with n = {n}")]
    IncompatibleSeed { kind: &'static str, n: usize },

    #[error("invalid orbit specification: {0}")]
    InvalidSpec(String),

    #[error("invalid integrator settings: {0}")]
    InvalidIntegrator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
