use thiserror::Error;

/// Errors raised by the decomposition, estimation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmdError {
    #[error("kernel not positive definite: {0}")]
    KernelNotPositiveDefinite(String),

    #[error("kernel not symmetric: {name} entry ({row}, {col}) differs from its transpose")]
    KernelNotSymmetric {
        name: String,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("empty design matrix")]
    EmptyDesign,

    #[error("response vector is required for this operation")]
    MissingResponse,

    #[error("zero-norm column {0}")]
    ZeroNormColumn(usize),

    #[error("zero response norm")]
    ZeroResponseNorm,

    #[error("degenerate noise: estimated variance is zero")]
    DegenerateNoise,

    #[error("degenerate distances: squared distance matrix yields a zero kernel")]
    DegenerateDistances,

    #[error("index set contains component {index} outside 1..={rank}")]
    InvalidIndexSet { index: usize, rank: usize },

    #[error("empty weight: every weight is zero")]
    EmptyWeight,

    #[error("singular dual system at eta = {eta}; use eta > 0")]
    SingularDualSystem { eta: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(
        "coordinate descent did not converge after {sweeps} sweeps \
         (max coordinate change {max_change:.3e}, max KKT violation {kkt:.3e})"
    )]
    NonConvergence {
        sweeps: usize,
        max_change: f64,
        kkt: f64,
    },

    #[error("minimum detectable effect undefined: h = 0 and xi_jj = 0 for coefficient {0}; use h = 1")]
    UndefinedPowerBound(usize),

    #[error("a kernel is zero after centering; statistic undefined")]
    ZeroCenteredKernel,

    #[error("constant response: association statistic undefined")]
    ConstantResponse,

    #[error("unknown variant: {0}")]
    UnknownVariant(String),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<GmdError>,
    },
}

pub type Result<T> = std::result::Result<T, GmdError>;

impl GmdError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        GmdError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: &str, expected: impl ToString, actual: impl ToString) -> Self {
        GmdError::DimensionMismatch {
            what: what.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
