use thiserror::Error;

/// Errors surfaced by the filter and mechanics layers.
///
/// Domain violations are reported, never clamped: `(a <= 0, b = 0)` means the
/// barrier function is not a CBF at the queried point, and masking that would
/// hide a modeling error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("CBF condition violated: a = {a} <= 0 with b = 0")]
    CbfConditionViolated { a: f64 },
    #[error("point outside the safe operating domain (h0 = {h0})")]
    OutsideDomain { h0: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("input codistribution is rank deficient at the queried point")]
    RankDeficient,
    #[error("projection matrix is not idempotent")]
    NotIdempotent,
    #[error("force outside the input codistribution span (residual {residual:e})")]
    ForceOutsideSpan { residual: f64 },
    #[error("rotation logarithm is ambiguous near angle pi")]
    LogBranchAmbiguity,
    #[error("matrix is not skew-symmetric")]
    NotSkew,
    #[error("simulation diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
