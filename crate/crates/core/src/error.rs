use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    TripleParse {
        path: PathBuf,
        line: usize,
        found: usize,
    },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("entity id {0} out of range")]
    InvalidEntityId(u32),

    #[error("relation id {0} out of range")]
    InvalidRelationId(u32),

    #[error("rule syntax error: {0}")]
    RuleSyntax(String),

    #[error("rule does not match any rule type: {0}")]
    RuleClass(String),

    #[error("{path}:{line}: {source}")]
    RuleFile {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    RuleFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("rule inferred no triples; confidence is undefined")]
    UndefinedConfidence,

    #[error("jaccard similarity of two empty sets is undefined")]
    UndefinedSimilarity,

    #[error("minhash signature of an empty set is undefined")]
    EmptySignature,

    #[error("signatures were built with different k or seeds")]
    SignatureMismatch,

    #[error("rule cannot answer this task: {0}")]
    DirectionMismatch(String),

    #[error("no prediction tasks; metric is undefined")]
    EmptyTasks,

    #[error("dead-end random walk after {0} attempts")]
    WalkFailed(usize),

    #[error("invalid ground path: {0}")]
    InvalidPath(String),

    #[error("missing {what} at {path}; run `{producer}` first")]
    MissingArtifact {
        what: String,
        path: PathBuf,
        producer: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("bad cache file {path}: {msg}")]
    CacheFormat { path: PathBuf, msg: String },

    #[error("bad prediction file {path}:{line}: {msg}")]
    PredictionFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
