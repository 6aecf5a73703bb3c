use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("midi parse error at byte {offset}: {msg}")]
    MidiParse { offset: usize, msg: String },

    #[error("note table parse error at line {line}: {msg}")]
    NoteTable { line: usize, msg: String },

    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &'static str, lhs: impl Into<String>, rhs: impl Into<String>) -> Self {
        Error::Shape {
            op,
            lhs: lhs.into(),
            rhs: rhs.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
