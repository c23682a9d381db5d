use thiserror::Error;

#[derive(Debug, Error)]
pub enum OmtError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("solver did not converge: {message} (best mu = {best_mu:?}, residuals = {residuals:?})")]
    NonConvergence {
        message: String,
        best_mu: Vec<f64>,
        residuals: Vec<f64>,
    },

    #[error("certificate withheld: {0}")]
    Certificate(String),

    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl OmtError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OmtError::Validation(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            OmtError::Validation(_) | OmtError::Json(_) | OmtError::Csv(_) => 2,
            OmtError::NonConvergence { .. } | OmtError::Quadrature(_) => 3,
            OmtError::Certificate(_) => 4,
            OmtError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, OmtError>;
