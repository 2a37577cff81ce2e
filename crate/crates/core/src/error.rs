//! Crate-wide error types.

use thiserror::Error;

/// Errors produced by the cryptographic and protocol layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter sets disagree between operands (mixed rings, mixed profiles).
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),

    /// A value is outside the domain an operation requires.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Serialized bytes do not decode to the claimed object.
    #[error("deserialization failed: {0}")]
    Deserialize(String),

    /// Model file rejected (syntax, dimension chain, missing weights).
    #[error("model error: {0}")]
    Model(String),

    /// Garbled-circuit evaluation failed (no table row authenticated).
    #[error("garbled row authentication failed at gate {gate}")]
    GarbledRowAuth {
        /// Index of the gate whose table rejected every row.
        gate: usize,
    },

    /// An oblivious-transfer message was malformed.
    #[error("oblivious transfer failed: {0}")]
    ObliviousTransfer(String),

    /// A message arrived that the receiving party's phase state does not expect.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// The peer closed the channel or a frame could not be read/written.
    #[error("transport error: {0}")]
    Transport(String),

    /// Waiting on a peer exceeded the configured timeout.
    #[error("timed out waiting for {0}")]
    Timeout(String),

    /// A single-use share was consumed twice.
    #[error("share record reused: {0}")]
    ShareReuse(String),

    /// Run configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
