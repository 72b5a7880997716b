use thiserror::Error;

use crate::eigen::EigenCertificate;
use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("negative switching rate {value} from state {from} to state {to}")]
    NegativeRate { from: usize, to: usize, value: f64 },

    #[error("switching generator is reducible {location}")]
    Reducible { location: String },

    #[error(
        "grid resolution {grid} violates the Peclet condition (max drift {max_drift}); \
         minimal admissible resolution is {min_grid}"
    )]
    Peclet { grid: usize, max_drift: f64, min_grid: usize },

    #[error("assembled operator is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("assembled operator is not irreducible")]
    ReducibleOperator,

    #[error("eigenvector component {index} is not positive ({value})")]
    NonPositiveVector { index: usize, value: f64 },

    #[error("power iteration did not converge after {} iterations (gap {:e})", .0.iterations, .0.cw_upper - .0.cw_lower)]
    Convergence(Box<EigenCertificate>),

    #[error("momentum grid too coarse around 0: {0}")]
    CoarseGrid(String),

    #[error("structural diagnostics failed: {0}")]
    Diagnostics(String),

    #[error("path error: {0}")]
    Path(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidModel(_)
                | Error::Config(_)
                | Error::NegativeRate { .. }
                | Error::Reducible { .. }
                | Error::Peclet { .. }
                | Error::Path(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}
