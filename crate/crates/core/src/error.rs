use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("enumeration cap exceeded: need {required}, cap is {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("position {0} is not masked")]
    NotMasked(usize),

    #[error("position {pos} out of range for length {len}")]
    PositionOutOfRange { pos: usize, len: usize },

    #[error("token {token} is not a data token for alphabet size {size}")]
    InvalidToken { token: u32, size: u32 },

    #[error("sequence is not clean (contains MASK)")]
    NotClean,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("distribution is not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("policy handle is frozen")]
    Frozen,

    #[error("operation requires a parametric policy")]
    NotParametric,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("tree search exhausted: every reachable leaf is terminal")]
    Exhausted,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("exact hypervolume limited to {max_points} points and {max_dims} objectives (got {points} points, {dims} objectives); use the Monte-Carlo estimator")]
    ExactEngineLimit { points: usize, dims: usize, max_points: usize, max_dims: usize },

    #[error("alphabet: {0}")]
    Alphabet(String),
}

impl Error {
    /// Stable snake_case identifier for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::NotMasked(_) => "not_masked",
            Error::PositionOutOfRange { .. } => "position_out_of_range",
            Error::InvalidToken { .. } => "invalid_token",
            Error::NotClean => "not_clean",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DimensionMismatch(..) => "dimension_mismatch",
            Error::NotNormalized(_) => "not_normalized",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Frozen => "frozen",
            Error::NotParametric => "not_parametric",
            Error::Empty(_) => "empty",
            Error::Exhausted => "exhausted",
            Error::ModelFormat(_) => "model_format",
            Error::ExactEngineLimit { .. } => "exact_engine_limit",
            Error::Alphabet(_) => "alphabet",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
