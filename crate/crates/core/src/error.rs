use thiserror::Error;

/// Every failure the library can report.
///
/// Validation variants name the offending field; numerical variants carry
/// enough context to be counted and tagged by the Monte Carlo harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("theta = {theta} is outside the parameter space (-1/2, 1e6]")]
    ThetaOutOfRange { theta: f64 },
    #[error("alpha = {alpha} must be positive")]
    NonPositiveAlpha { alpha: f64 },
    #[error("delta = {delta} must be positive")]
    NonPositiveDelta { delta: f64 },
    #[error("sampling scheme has no observations (n = 0)")]
    EmptyScheme,
    #[error("observation {index} = {value} is not in the state space")]
    InvalidObservation { index: usize, value: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("times must be strictly increasing and positive (at position {index})")]
    InvalidTimes { index: usize },
    #[error("{name} = {value} is invalid: {reason}")]
    InvalidArgument {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("argument {x} must be positive")]
    NonPositiveArgument { x: f64 },
    #[error("gamma shape {shape} must be positive")]
    InvalidShape { shape: f64 },
    #[error("gamma scale {scale} must be positive")]
    InvalidScale { scale: f64 },
    #[error("Poisson mean {mean} must be non-negative")]
    NegativeMean { mean: f64 },
    #[error("degrees of freedom {df} must be positive")]
    InvalidDf { df: f64 },
    #[error("noncentrality {noncentrality} must be non-negative")]
    NegativeNoncentrality { noncentrality: f64 },
    #[error("density evaluation point {y} must be positive")]
    NonPositivePoint { y: f64 },
    #[error("noncentral chi-square series did not settle within {cap} terms")]
    SeriesCapExceeded { cap: usize },

    #[error("Euler step too large: dt * alpha = {value} exceeds 0.5")]
    StepSizeTooLarge { value: f64 },
    #[error("Euler reflection floor hit on {clamped} of {steps} steps")]
    ClampLimitExceeded { clamped: usize, steps: usize },
    #[error("exponential time grid overflows: 2 * alpha * n * delta = {exponent}")]
    OverflowHorizon { exponent: f64 },
    #[error("simulated state hit zero at step {step}")]
    ZeroState { step: usize },

    #[error("eigenfunction order {eta} is not supported (1..=8)")]
    UnsupportedOrder { eta: usize },
    #[error("quadrature did not converge: {coarse} vs {fine}")]
    QuadratureNotConverged { coarse: f64, fine: f64 },

    #[error("estimate {theta_hat} lies outside the parameter space")]
    EstimateOutOfRange { theta_hat: f64 },
    #[error("no sign change over [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("root solver did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("two-eigenfunction weights are degenerate (f = 0 at theta = {theta})")]
    WeightDegenerate { theta: f64 },
    #[error("root bracket is invalid: lo = {lo}, hi = {hi}, tol = {tol}")]
    InvalidBracket { lo: f64, hi: f64, tol: f64 },
    #[error("need at least {required} estimates, got {actual}")]
    TooFewEstimates { required: usize, actual: usize },

    #[error("configuration error: {message}")]
    Config { message: String },
    #[error("schema error at row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Short stable tag used when counting failures.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::ThetaOutOfRange { .. } => "theta_out_of_range",
            Error::NonPositiveAlpha { .. } => "non_positive_alpha",
            Error::NonPositiveDelta { .. } => "non_positive_delta",
            Error::EmptyScheme => "empty_scheme",
            Error::InvalidObservation { .. } => "invalid_observation",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::InvalidTimes { .. } => "invalid_times",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::NonPositiveArgument { .. } => "non_positive_argument",
            Error::InvalidShape { .. } => "invalid_shape",
            Error::InvalidScale { .. } => "invalid_scale",
            Error::NegativeMean { .. } => "negative_mean",
            Error::InvalidDf { .. } => "invalid_df",
            Error::NegativeNoncentrality { .. } => "negative_noncentrality",
            Error::NonPositivePoint { .. } => "non_positive_point",
            Error::SeriesCapExceeded { .. } => "series_cap_exceeded",
            Error::StepSizeTooLarge { .. } => "step_size_too_large",
            Error::ClampLimitExceeded { .. } => "clamp_limit_exceeded",
            Error::OverflowHorizon { .. } => "overflow_horizon",
            Error::ZeroState { .. } => "zero_state",
            Error::UnsupportedOrder { .. } => "unsupported_order",
            Error::QuadratureNotConverged { .. } => "quadrature_not_converged",
            Error::EstimateOutOfRange { .. } => "estimate_out_of_range",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::NotConverged { .. } => "not_converged",
            Error::WeightDegenerate { .. } => "weight_degenerate",
            Error::InvalidBracket { .. } => "invalid_bracket",
            Error::TooFewEstimates { .. } => "too_few_estimates",
            Error::Config { .. } => "config",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
        }
    }
}

impl Error {
    /// Process exit status: 2 for bad configuration, 3 for bad data or I/O,
    /// 4 for numerical non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. }
            | Error::Io(_)
            | Error::InvalidObservation { .. }
            | Error::InvalidTimes { .. }
            | Error::LengthMismatch { .. }
            | Error::TooFewEstimates { .. }
            | Error::EstimateOutOfRange { .. } => 3,
            Error::NotConverged { .. }
            | Error::NoSignChange { .. }
            | Error::QuadratureNotConverged { .. }
            | Error::SeriesCapExceeded { .. }
            | Error::ClampLimitExceeded { .. }
            | Error::ZeroState { .. } => 4,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
