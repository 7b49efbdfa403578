//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdnError>;

#[derive(Debug, Error)]
pub enum SdnError {
    /// Tensor/layer dimensions do not agree.
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A scalar argument is outside its allowed range.
    #[error("invalid parameter {name}: {message}")]
    Parameter { name: String, message: String },

    /// A caller violated an API precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training aborted (non-finite loss or gradient).
    #[error("training failed: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Model file could not be parsed or fails validation.
    #[error("model format: {0}")]
    Format(#[from] FormatError),

    #[error("config: {0}")]
    Config(String),
}

impl SdnError {
    pub fn shape(op: &str, left: &[usize], right: &[usize]) -> Self {
        SdnError::ShapeMismatch {
            op: op.to_string(),
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn parameter(name: &str, message: impl Into<String>) -> Self {
        SdnError::Parameter {
            name: name.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SdnError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Distinct parse failures for the binary model format. Offsets are byte
/// positions from the start of the file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic at offset 0: expected \"SDNM\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("truncated file at offset {offset}: expected {expected} more bytes, found {actual}")]
    Truncated {
        offset: usize,
        expected: usize,
        actual: usize,
    },

    #[error("unknown {what} tag {tag} at offset {offset}")]
    UnknownTag {
        what: &'static str,
        tag: u8,
        offset: usize,
    },

    #[error("inconsistent shape chain at layer {layer}: {message}")]
    ShapeChain { layer: usize, message: String },

    #[error("trailing garbage: {extra} unread bytes at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("invalid field {name}: {message}")]
    Field { name: &'static str, message: String },
}
