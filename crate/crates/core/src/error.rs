use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: &'static str, message: String },

    #[error("missing binding for placeholder {{{0}}}")]
    MissingBinding(String),

    #[error("unknown prompt template: {0}")]
    UnknownTemplate(String),

    #[error("could not parse {expected} items from generated text: {raw:?}")]
    ListParse { expected: usize, raw: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("backend does not support {0}; fall back to the n-gram scorer")]
    Capability(&'static str),

    #[error("generation failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<Error> },

    #[error("classifying prefix m={m}: {source}")]
    Prefix { m: usize, source: Box<Error> },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("undefined statistic: {0}")]
    Undefined(&'static str),

    #[error("incomplete annotation coverage for {} instance(s): {}", .0.len(), .0.join(", "))]
    Coverage(Vec<String>),

    #[error("fixture transcript has no response for request {0}")]
    FixtureMiss(String),
}

impl Error {
    pub(crate) fn validation(field: &'static str, message: impl Into<String>) -> Self {
        Error::Validation {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
