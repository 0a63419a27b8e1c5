use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("truncation tail mass {mass:.3e} exceeds tolerance {tolerance:.3e} (dim {dim})")]
    TailTooLarge { mass: f64, tolerance: f64, dim: usize },

    #[error("states use different truncation configurations")]
    MixedTruncation,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid truncation: {0}")]
    BadTruncation(String),

    #[error("invalid state specification: {0}")]
    BadSpec(String),

    #[error("wrong number of modes: {0}")]
    BadArity(String),

    #[error("phase constraint violated: sum of Im(a_i conj(b_i)) = {phase_sum:.6} is not a multiple of pi")]
    ConstraintViolated { phase_sum: f64 },

    #[error("invalid probability distribution: {0}")]
    BadDistribution(String),

    #[error("degenerate noise-response fit for family '{family}': {reason}")]
    DegenerateFit { family: String, reason: String },

    #[error("value out of range: {0}")]
    BadRange(String),

    #[error("operator check failed: {0}")]
    OperatorCheck(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::TailTooLarge { .. } => "TailTooLarge",
            Error::MixedTruncation => "MixedTruncation",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::BadTruncation(_) => "BadTruncation",
            Error::BadSpec(_) => "BadSpec",
            Error::BadArity(_) => "BadArity",
            Error::ConstraintViolated { .. } => "ConstraintViolated",
            Error::BadDistribution(_) => "BadDistribution",
            Error::DegenerateFit { .. } => "DegenerateFit",
            Error::BadRange(_) => "BadRange",
            Error::OperatorCheck(_) => "OperatorCheck",
            Error::Numeric(_) => "Numeric",
        }
    }

    /// Whether the failure stems from user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        !matches!(
            self,
            Error::TailTooLarge { .. } | Error::Numeric(_) | Error::DegenerateFit { .. } | Error::OperatorCheck(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
