use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("invalid system spec: {0}")]
    Spec(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("system `{0}` has no feedback law k")]
    MissingFeedback(String),

    #[error("unknown registry system `{0}`")]
    UnknownSystem(String),

    #[error("solution blew up at t = {time}: state norm exceeded {limit:e}")]
    BlowUp { time: f64, limit: f64 },

    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("maximum number of steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("improper integral does not decay: tail estimate {tail:e} at horizon {horizon}")]
    Divergence { horizon: f64, tail: f64 },

    #[error("Richardson ladder did not converge: spread {spread:e} exceeds {tol:e}")]
    NonConvergent { spread: f64, tol: f64 },

    #[error("decay fit failed: {0}")]
    DecayFit(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
