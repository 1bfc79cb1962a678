use thiserror::Error;

/// Errors produced anywhere in the coding, synthesis and decoding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no Hadamard construction for order {0} (supported: s*2^a with s in {{1, 12, 20}}, order >= 2)")]
    UnsupportedOrder(usize),

    #[error("timing: {0}")]
    Timing(String),

    #[error("nyquist: sample rate {sample_rate} Hz is below the required {required} Hz for the highest carrier")]
    Nyquist { sample_rate: f64, required: f64 },

    #[error("layout: {0}")]
    Layout(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("region is empty or outside the image")]
    EmptyRegion,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
