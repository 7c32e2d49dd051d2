use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("ingestion error in {file}{}: {msg}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Ingest {
        file: String,
        line: Option<usize>,
        msg: String,
    },

    #[error("split error for class {class}: {msg}")]
    Split { class: usize, msg: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("training aborted: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn ingest(file: impl Into<String>, line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Ingest {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }
}
