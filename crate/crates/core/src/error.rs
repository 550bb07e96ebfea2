use thiserror::Error;

use crate::optim::NewtonFailure;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular precision block: {0}")]
    Singular(String),

    #[error("degenerate curvature: {0}")]
    DegenerateCurvature(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    /// Newton iteration failed to reach the gradient tolerance.
    #[error("optimizer did not converge{}: {failure}", time_suffix(*.time_index))]
    NonConvergence {
        time_index: Option<usize>,
        failure: Box<NewtonFailure>,
    },
}

fn time_suffix(t: Option<usize>) -> String {
    t.map(|t| format!(" at t={t}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn at_time(self, t: usize) -> Self {
        match self {
            Error::NonConvergence { failure, .. } => Error::NonConvergence {
                time_index: Some(t),
                failure,
            },
            other => other,
        }
    }
}
