use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid key material: {0}")]
    InvalidKeyMaterial(String),

    #[error("keyed stream exhausted after 2^64 blocks")]
    StreamExhausted,

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid graph spec: {0}")]
    InvalidGraphSpec(String),

    #[error("invalid map parameters: {0}")]
    InvalidMapParams(String),

    #[error("state component {value} outside the invariant domain of the {map} map")]
    DomainViolation { map: &'static str, value: f64 },

    #[error("non-finite state at node {node}, timestep {step}")]
    NumericalDivergence { node: usize, step: usize },

    #[error("both inputs use the same key and nonce")]
    IdenticalInputs,

    #[error("chaos verification failed: estimated exponent {lambda} is not positive")]
    ChaosVerificationFailed { lambda: f64 },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("container fingerprint {stored} does not match options fingerprint {computed}")]
    ConfigMismatch { stored: String, computed: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
