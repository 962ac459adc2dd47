use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("model is not in the low-temperature regime")]
    NotLowTemp,

    #[error("entropy objective at m = 1 is {value}, no sign change to bracket")]
    NoBracket { value: f64 },

    #[error("root finder stalled with residual {residual:e}")]
    NoConvergence { residual: f64 },

    #[error("rejection sampler acceptance rate {rate:e} below floor {floor:e}")]
    RejectionStall { rate: f64, floor: f64 },

    #[error("expected point count {expected:e} exceeds budget {budget:e}")]
    CutoffTooSmall { expected: f64, budget: f64 },

    #[error("point sample is empty")]
    Empty,

    #[error("weights have fewer than two nonzero entries")]
    DegenerateWeights,

    #[error("system size {n} outside 1..={max}")]
    SizeTooLarge { n: usize, max: usize },

    #[error("operation requires a REM+Cavity disorder sample")]
    WrongModel,

    #[error("tanh table unavailable for N = {n}")]
    NoTanhTable { n: usize },

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("malformed disorder dump: {0}")]
    BadDump(String),
}
