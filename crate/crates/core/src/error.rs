use thiserror::Error;

/// Errors raised by the geometry, solver, flow and mass routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The iterative linear solver hit its iteration cap.
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// Mean curvature is not strictly positive where the caller requires it.
    #[error("mean curvature {value:.6e} <= 0 at node {node} (theta = {theta:.6})")]
    NonPositiveMeanCurvature { node: usize, theta: f64, value: f64 },

    /// A flow step changed `u` by more than the allowed sup-norm increment.
    #[error("step rejected: sup-norm change {change:.3e} exceeds {limit:.3e} (dt = {dt:.3e})")]
    StepRejected { change: f64, limit: f64, dt: f64 },

    /// The rescaled flow drifted away without bound.
    #[error("flow diverged at t = {t:.4}: rescaled max u = {value:.4e}")]
    Diverged { t: f64, value: f64 },

    /// Level-set geometry could not be resolved on the grid.
    #[error("level set {level} could not be resolved: {reason}")]
    LevelSet { level: f64, reason: String },

    /// Configuration parse or validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
