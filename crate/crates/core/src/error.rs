use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semi-definite (jitter ladder exhausted at {max_jitter:e})")]
    NotPsd { max_jitter: f64 },

    #[error("negative distance {0}")]
    NegativeDistance(f64),

    #[error("singular co-Kriging system: {0}")]
    SingularSystem(String),

    #[error("location is not a grid node: {0}")]
    OffGridLocation(String),

    #[error("dimension {dim} exceeds the supported cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("grid with {nodes} nodes exceeds the limit of {limit} for this quadratic-cost functional")]
    GridTooLarge { nodes: usize, limit: usize },

    #[error("degenerate extent: {0}")]
    DegenerateExtent(String),

    #[error("truth field has zero spatial variance for response {0}")]
    DegenerateTruth(usize),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("variogram fit diverged: {0}")]
    FitDiverged(String),

    #[error("residual covariance is singular")]
    SingularCovariance,

    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema { .. } | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
