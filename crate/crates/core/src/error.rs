use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unparseable timestamp {value:?} at line {line}")]
    Timestamp { line: usize, value: String },
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("degenerate span: {0}")]
    DegenerateSpan(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
    #[error("gate collapse: {0}")]
    Collapse(String),
    #[error("index {index} out of range for input of length {length}")]
    Bounds { index: usize, length: usize },
    #[error("method {0} is not supported by this model")]
    UnsupportedMethod(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("example {id}: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("label space mismatch: {0} vs {1} classes")]
    LabelSpace(usize, usize),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn for_example(self, id: &str) -> Self {
        Error::Example {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
