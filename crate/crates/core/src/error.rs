//! Shared error type for construction and precondition failures.

use thiserror::Error;

/// Errors raised by constructors and operations across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty support")]
    EmptySupport,

    #[error("support has {labels} labels but {weights} weights")]
    LengthMismatch { labels: usize, weights: usize },

    #[error("duplicate label in support")]
    DuplicateLabel,

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("distributions have different supports")]
    SupportMismatch,

    #[error("joint support does not cover the full product of its alphabets")]
    NotRectangular,

    #[error("{got} input spaces but {expected} parties expected")]
    PartyCountMismatch { expected: usize, got: usize },

    #[error("operation needs at least {min} parties, got {got}")]
    TooFewParties { min: usize, got: usize },

    #[error("unknown input labels {0:?}")]
    UnknownInput(Vec<u32>),

    #[error("unknown output labels {0:?}")]
    UnknownOutput(Vec<i32>),

    #[error("box for w={w} is signalling (max violation {violation:.3e})")]
    SignallingBox { w: u32, violation: f64 },

    #[error(
        "q undefined at (a={a}, b={b}): w={w} has zero weight there but \
         weight {numerator:.3e} under a neighbouring pair"
    )]
    QUndefined { a: u32, b: u32, w: u32, numerator: f64 },

    #[error("q = 0 at (a={a}, b={b}); the freedom bound requires q > 0")]
    QZero { a: u32, b: u32 },

    #[error("epsilon {0} outside [0, 1/2)")]
    EpsilonOutOfRange(f64),

    #[error("epsilon {epsilon} at or above the amplification threshold {threshold}")]
    AboveAmplificationThreshold { epsilon: f64, threshold: f64 },

    #[error("bias rule produced {bias}, outside the allowed band [{lo}, {hi}]")]
    BiasOutOfRange { bias: f64, lo: f64, hi: f64 },

    #[error("device has no declared box for w={0}")]
    UnknownHiddenValue(u32),

    #[error("{got} trials requested, need at least {min} for a stable estimate")]
    TooFewTrials { min: usize, got: usize },

    #[error("no accepted runs out of {0}, nothing to estimate")]
    NoAcceptedRuns(usize),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("{0}")]
    InvalidParameter(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
