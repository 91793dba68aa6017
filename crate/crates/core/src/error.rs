use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(
        "quadrature did not reach tolerance {tolerance:e} (estimate {estimate}, error {error_estimate:e}, {subdivisions} subintervals)"
    )]
    Quadrature {
        estimate: f64,
        error_estimate: f64,
        tolerance: f64,
        subdivisions: usize,
    },

    #[error("root finder failed for target {target}: {reason}")]
    RootFinding { target: f64, reason: &'static str },

    #[error("unsupported kernel `{0}` (expected gaussian, epanechnikov or quartic)")]
    UnsupportedKernel(String),

    #[error("kernel `{kernel}` has no partial derivative of order {order} in one coordinate")]
    UnsupportedDerivative { kernel: String, order: u32 },

    #[error("dimension must be at least 1, got {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tensor-product quadrature is limited to d <= 3, got d = {0}")]
    DimensionTooLarge(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exponent constraint violated: {0}")]
    ExponentConstraint(String),

    #[error("no observation absorbed yet: the estimator is undefined at n = 0")]
    EmptyEstimate,

    #[error("exponent {exponent} exceeds the overflow guard {limit} in term i = {index}")]
    ExponentOverflow {
        index: u64,
        exponent: f64,
        limit: f64,
    },

    #[error("rate mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("experiment underpowered: zero exceedances at every n (R = {replications})")]
    Underpowered { replications: u64 },
}
