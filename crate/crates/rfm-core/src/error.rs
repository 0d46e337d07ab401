use crate::projection::Family;
use thiserror::Error;

/// Errors produced by panel construction, statistics, and model operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input vector")]
    EmptyVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate sample: need at least {required} observations, got {actual}")]
    DegenerateSample { required: usize, actual: usize },

    #[error("column {column} has zero variance")]
    ZeroVarianceColumn { column: usize },

    #[error("zero-variance series: correlation undefined")]
    ZeroVarianceSeries,

    #[error("price at index {index} is not strictly positive")]
    NonPositivePrice { index: usize },

    #[error("panel must be centered (zero column means) for this operation")]
    UncenteredPanel,

    #[error("vector must have zero mean for this operation")]
    NonZeroMean,

    #[error("family `{family}` does not have i.i.d. elements")]
    NotElementIid { family: Family },

    #[error("factor count {k} out of range 1..={max}")]
    FactorOutOfRange { k: usize, max: usize },

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
