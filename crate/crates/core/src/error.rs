use std::path::PathBuf;

/// Errors produced while building sheaves, filtering signals and training networks.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("node {0} has no neighbours inside the kernel support; increase epsilon")]
    IsolatedNode(usize),

    #[error("node {node} has {found} neighbours but local PCA needs at least {required}; increase epsilon_pca")]
    InsufficientNeighbors {
        node: usize,
        found: usize,
        required: usize,
    },

    #[error("local PCA at node {0} produced only vanishing singular values")]
    DegenerateSpectrum(usize),

    #[error("tangent bases of nodes {i} and {j} are nearly orthogonal (smallest singular value {sigma_min:e}); decrease epsilon")]
    RankDeficientAlignment { i: usize, j: usize, sigma_min: f64 },

    #[error("node {0} has zero degree")]
    ZeroDegree(usize),

    #[error("eigensolver failed: {0}")]
    ConvergenceFailure(String),

    #[error("signal is not representable in the stored partial spectrum (residual energy fraction {residual:e})")]
    PartialSpectrum { residual: f64 },

    #[error("dense operator of size {size} exceeds the configured cap {cap}")]
    DimensionOverflow { size: usize, cap: usize },

    #[error("loss became non-finite at epoch {epoch}; try lowering the learning rate")]
    NonFiniteLoss { epoch: usize },

    #[error("activation cache does not match the model: {0}")]
    StaleCache(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::IsolatedNode(_)
                | Error::InsufficientNeighbors { .. }
                | Error::DegenerateSpectrum(_)
                | Error::RankDeficientAlignment { .. }
                | Error::ZeroDegree(_)
                | Error::ConvergenceFailure(_)
                | Error::PartialSpectrum { .. }
                | Error::NonFiniteLoss { .. }
        )
    }

    pub(crate) fn mismatch(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
