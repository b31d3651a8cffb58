use thiserror::Error;

/// Errors raised by the homomorphic operation contract and its backends.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("slot count mismatch: {left} vs {right}")]
    SlotCountMismatch { left: usize, right: usize },
    #[error("no multiplicative level left (level {level})")]
    LevelExhausted { level: usize },
    #[error("no rotation key for amount {0}")]
    MissingRotationKey(i64),
    #[error("modulus of {total_bits} bits exceeds the 128-bit bound {bound:?} for ring degree {ring_degree}")]
    InsecureParameters {
        ring_degree: usize,
        total_bits: u32,
        bound: Option<u32>,
    },
    #[error("{0} is not an NTT-compatible prime for this ring")]
    InvalidPrime(u64),
    #[error("slot value {value} exceeds magnitude limit {limit}")]
    MagnitudeOverflow { value: f64, limit: f64 },
    #[error("parameter digest of key or ciphertext does not match this context")]
    KeyMismatch,
    #[error("operation expects a two-component ciphertext form, got {components}")]
    InvalidCiphertextForm { components: usize },
    #[error("ciphertext belongs to a different backend")]
    BackendMismatch,
    #[error("plain vector has {got} slots, expected {expected}")]
    PlainLength { got: usize, expected: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed encoding: {0}")]
    Malformed(String),
    #[error("secret key required for this operation")]
    MissingSecretKey,
}
