use thiserror::Error;

use crate::model::Wheel;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate coupler geometry: endpoints coincide (D = {0:e})")]
    DegenerateGeometry(f64),

    #[error("impact precondition violated: wheel {wheel} at theta = {theta}, surface at {alpha}")]
    ImpactPrecondition { wheel: Wheel, theta: f64, alpha: f64 },

    #[error("no impact surface crossing inside the step")]
    NoCrossing,

    #[error("non-finite state {0}")]
    NonFinite(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("regression matrix is rank deficient (reciprocal condition {0:e})")]
    RankDeficient(f64),

    #[error("trials were generated from different parameters")]
    MismatchedParams,

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("no valid cell in sweep")]
    NoValidCell,
}

pub type Result<T> = std::result::Result<T, Error>;
