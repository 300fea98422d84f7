//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    /// Shapes disagree with an operation's contract.
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An operation produced (or was handed) a NaN/Inf value.
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },

    /// A network or training configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Weight container parse/serialize failure.
    #[error("weight container: {0}")]
    Container(String),

    /// Backward called on an already-consumed tape.
    #[error("tape already consumed by backward; rebuild the forward pass")]
    TapeConsumed,

    /// Backward requires a scalar (1,1,1,1) loss.
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(String),

    /// Image decode/encode or color-space failure.
    #[error("image: {0}")]
    Image(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
