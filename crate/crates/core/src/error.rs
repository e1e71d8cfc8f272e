use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no connected network after {attempts} attempts (radius {radius} too small for {n} agents?)")]
    ConnectivityFailure { n: usize, radius: f64, attempts: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),

    #[error("factorization VᵀV = (I − W)/2 violated by {deviation:e}")]
    FactorizationMismatch { deviation: f64 },

    #[error("mixing matrix has λ_min(W) = {lambda_min} ≤ −1; G is not positive definite")]
    NotPositiveDefinite { lambda_min: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("proximal scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("largest Lipschitz constant is zero; the global step bound is unbounded")]
    ZeroLipschitz,

    #[error("γ must lie in (0, 2), got {0}")]
    GammaOutOfRange(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("mean duration must be positive, got {0}")]
    NonPositiveMean(f64),

    #[error("degenerate activation probability: {0}")]
    DegenerateProbability(String),

    #[error("simulation horizon is empty")]
    HorizonZero,

    #[error("relative error undefined: ‖X⁰ − X*‖ = {0:e}")]
    DegenerateStart(f64),

    #[error("problem instance has no reference solution")]
    MissingReference,

    #[error("rank-deficient least-squares system: {0}")]
    RankDeficient(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than by
    /// the numerics of a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::HorizonZero
                | Error::GammaOutOfRange(_)
                | Error::NonPositiveMean(_)
                | Error::NonPositiveScale(_)
                | Error::ConnectivityFailure { .. }
                | Error::InvalidNetwork(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}
