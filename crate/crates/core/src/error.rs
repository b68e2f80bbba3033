use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("geometric degeneracy: {0}")]
    GeometricDegeneracy(String),

    #[error("projection failed to converge (residual {residual:.3e})")]
    ProjectionFailure { residual: f64 },

    #[error("vector is not tangent at the base point (normal residual {residual:.3e})")]
    InvalidTangent { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("alpha exponent undefined for sigma = {sigma} and c = {c}")]
    InvalidAlpha { sigma: f64, c: f64 },

    #[error("non-finite network output")]
    NumericOverflow,

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error("{0}")]
    UnsupportedMethod(String),

    #[error("all quadrature kernels underflow (max log-weight {max_log_weight:.1})")]
    DistanceTooFar { max_log_weight: f64 },

    #[error("mesh quality: {0}")]
    MeshQuality(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("{size} points exceed the exact-assignment cap of {cap}; subsample first")]
    SizeOverCap { size: usize, cap: usize },

    #[error("chain {chain} failed at t = {t}: {source}")]
    ChainFailure {
        chain: usize,
        t: f64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
