use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header at {path}: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("length mismatch: header declares {expected} values, data holds {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("score {0} outside [1, 5]")]
    ScoreOutOfRange(f64),
    #[error("inverted slice range ({0}, {1})")]
    InvertedRange(i64, i64),
    #[error("degenerate axis {0}: dim < 2 with spacing != 1")]
    DegenerateAxis(usize),
    #[error("empty ROI")]
    EmptyRoi,
    #[error("unknown filter '{0}'")]
    UnknownFilter(String),
    #[error("no valid pairs for offset set")]
    NoValidPairs,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nodule '{id}': {source}")]
    Nodule {
        id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("non-finite gradient in parameter '{0}'")]
    NonFiniteGradient(String),
    #[error("class {class} has {count} members, fewer than {folds} folds")]
    TooFewMembers {
        class: usize,
        count: usize,
        folds: usize,
    },
    #[error("id misalignment: '{0}' missing from {1}")]
    IdMisalignment(String, String),
    #[error("json error at {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error at {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn for_nodule(self, id: impl Into<String>) -> Self {
        Error::Nodule {
            id: id.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
