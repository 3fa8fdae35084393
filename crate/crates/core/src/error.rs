use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("record {index}: missing or invalid field `{field}`")]
    MalformedRecord { index: usize, field: String },

    #[error("dangling document ids: {}", .0.join(", "))]
    DanglingDocIds(Vec<String>),

    #[error("dataset {name}/{split} registered twice")]
    DuplicateSplit { name: String, split: String },

    #[error("character span [{start}, {end}) does not cover any token")]
    SpanInWhitespace { start: usize, end: usize },

    #[error("invalid span: {0}")]
    InvalidSpan(String),

    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,

    #[error("question of {len} tokens leaves no room for document content (max {max})")]
    QuestionTooLong { len: usize, max: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("block contains no real tokens")]
    EmptyBlock,

    #[error("backward called without a recorded forward pass")]
    NoTape,

    #[error("freeze count {k} out of range for {layers} layers")]
    LayerOutOfRange { k: usize, layers: usize },

    #[error("class `{0}` has no members")]
    EmptyClass(&'static str),

    #[error("label position {position} outside sequence of length {len}")]
    LabelOutOfRange { position: usize, len: usize },

    #[error("unknown ranking strategy `{0}`")]
    UnknownStrategy(String),

    #[error("unknown pooling `{0}`")]
    UnknownPooling(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: usize },

    #[error("tensor `{name}` shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor `{0}` missing")]
    MissingTensor(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("question `{0}` has no prediction rows")]
    MissingPrediction(String),

    #[error("question `{0}` has no candidate pool and no retrieval index was supplied")]
    MissingCandidates(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
