use thiserror::Error;

/// Errors raised anywhere in the compression and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in layer {layer_id} at flat index {index}")]
    NonFinite { layer_id: usize, index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("patch index {patch_index} out of range for layer {layer_id} ({num_patches} patches)")]
    IndexMismatch {
        layer_id: usize,
        patch_index: usize,
        num_patches: usize,
    },

    #[error("model has no weights")]
    EmptyModel,

    #[error("communication ledger has no records")]
    EmptyLedger,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("wire decode error: {0}")]
    Decode(String),

    #[error("loss diverged at step {step}: {loss}")]
    DivergedLoss { step: usize, loss: f64 },

    #[error("replica divergence: {0}")]
    ReplicaDivergence(String),

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
