//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent. `key` names the
    /// offending field (or layer) so callers can report it precisely.
    #[error("invalid configuration: {key}: {message}")]
    Config { key: String, message: String },

    /// Tensor or image shapes do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A backward pass was handed a cache that was not produced by a forward
    /// pass over the same parameters.
    #[error("stale or mismatched forward cache: {0}")]
    CacheMismatch(String),

    /// A numeric evaluation produced NaN or infinity.
    #[error("non-finite value in {context}{}", fmt_index(.index))]
    NonFinite { context: String, index: Option<usize> },

    /// Training aborted; indices locate the failing step.
    #[error("training failed at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// Path refinement produced an unusable point.
    #[error("planning failed at sweep {sweep}, point {index}: {message}")]
    Planning {
        sweep: usize,
        index: usize,
        message: String,
    },

    /// Graph search could not reach the destination.
    #[error("no path: node {end} is disconnected from node {start}")]
    Disconnected { start: usize, end: usize },

    /// A binary file did not start with the expected magic bytes.
    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: String, expected: String },

    /// A file declares a format version this build does not understand.
    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    UnsupportedVersion {
        path: String,
        found: u32,
        supported: u32,
    },

    /// A file is shorter than its header declares.
    #[error("truncated file {path}: expected {expected} bytes, got {actual}")]
    Truncated {
        path: String,
        expected: u64,
        actual: u64,
    },

    /// Any other structural problem with an input file.
    #[error("malformed {path}: {message}")]
    Malformed { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {message}")]
    Json { path: String, message: String },
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" (index {i})"),
        None => String::new(),
    }
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn malformed(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            message: message.into(),
        }
    }
}
