use thiserror::Error;

/// Errors raised by dataset handling, trainers and experiment runners.
///
/// Solver outcomes (infeasible, unbounded, limits) are not errors; they are
/// carried in [`crate::optim::Status`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constant column `{0}` cannot be normalized")]
    ConstantColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("rank-deficient regressor matrix (rank {rank} < {cols}); remove collinear columns or add ridge jitter")]
    RankDeficient { rank: usize, cols: usize },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("MILP stopped without an incumbent (best bound {best_bound})")]
    NoIncumbent { best_bound: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
