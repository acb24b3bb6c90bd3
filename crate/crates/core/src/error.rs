use num_complex::Complex64;
use thiserror::Error;

use crate::stepper::StepStats;

/// Errors raised by tableau construction, spectral operators, problems,
/// the stepper and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular resolvent I - z a at z = {z}")]
    SingularResolvent { z: Complex64 },

    #[error("singular stage resolvent block at mode k = {mode} (h = {h})")]
    SingularStageBlock { mode: i64, h: f64 },

    #[error("state left the nonlinearity's domain: max |u| = {max_abs:e} exceeds radius {radius:e}")]
    DomainEscape { max_abs: f64, radius: f64 },

    #[error("unknown {what} `{name}`; available: {}", available.join(", "))]
    Lookup {
        what: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error(
        "fixed-point iteration did not converge in {} iterations (residual {:e}, contraction {:.3})",
        stats.iterations, stats.final_residual, stats.contraction_estimate
    )]
    ConvergenceFailure { stats: StepStats },

    #[error("numerical blow-up: non-finite value in {0}")]
    NumericalBlowup(&'static str),

    #[error("consistency check failed: {what} differs by {discrepancy:e} (bound {bound:e})")]
    ConsistencyCheck {
        what: &'static str,
        discrepancy: f64,
        bound: f64,
    },

    #[error("observer aborted integration at step {step}: {reason}")]
    ObserverAbort { step: usize, reason: String },

    #[error("unreliable reference: refinement changed the solution by {discrepancy:e}, bound is {bound:e}")]
    UnreliableReference { discrepancy: f64, bound: f64 },

    #[error("at h = {h}: {source}")]
    AtStepSize {
        h: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_h(self, h: f64) -> Self {
        Error::AtStepSize {
            h,
            source: Box::new(self),
        }
    }

    /// Strips step-size annotations and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStepSize { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
