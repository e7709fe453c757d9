use std::path::PathBuf;

use thiserror::Error;

use crate::types::LabelId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("example {position} has label id {label} outside the label space")]
    UnknownLabelId { position: usize, label: LabelId },
    #[error("example {0} has an empty input")]
    EmptyInput(usize),
    #[error("label space needs at least 2 labels, got {0}")]
    DegenerateLabelSpace(usize),
    #[error("verbalizer {0:?} is used by more than one label")]
    DuplicateVerbalizer(String),
    #[error("label name {0:?} is used more than once")]
    DuplicateLabelName(String),
    #[error("score vector is empty")]
    EmptyScores,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template uses <C> but the example has no context")]
    MissingContextField,
    #[error("placeholder mismatch: {0}")]
    PlaceholderMismatch(String),
    #[error("no completion defined for label {0:?}")]
    MissingCompletion(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template file: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NegativeError {
    #[error("pool has no example with label {0}, needed as a swap source")]
    NoCounterLabelExample(LabelId),
    #[error("label swap needs at least 2 labels, got {0}")]
    DegenerateLabelSpace(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("cannot select {k} demonstrations from a pool of {pool}")]
    PoolTooSmall { k: usize, pool: usize },
    #[error("document {0} is not indexed")]
    UnknownDocument(usize),
    #[error("embedding provider failed: {0}")]
    ProviderFailure(String),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidBm25Params { k1: f64, b: f64 },
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("candidate {candidate:?} could not be aligned to tokens: {reason}")]
    CandidateTokenization { candidate: String, reason: String },
    #[error("transport error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),
    #[error("mock table has no entry for prompt {prompt_sha256} / candidate {candidate:?}")]
    MissingMockEntry { prompt_sha256: String, candidate: String },
    #[error("invalid scoring request: {0}")]
    InvalidRequest(String),
    #[error("mock table {path}: {message}")]
    MockTable { path: PathBuf, message: String },
    #[error(transparent)]
    Scores(#[from] DatasetError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("score vectors differ in length: {positive} vs {negative}")]
    LengthMismatch { positive: usize, negative: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteInput(usize),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: unknown label name {name:?}")]
    UnknownLabelName { path: PathBuf, line: usize, name: String },
    #[error("{path}:{line}: missing field {field:?}")]
    MissingField { path: PathBuf, line: usize, field: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{split} split has {actual} records but the manifest declares {declared}")]
    SizeMismatch { split: String, declared: usize, actual: usize },
    #[error("{split} split: {source}")]
    Dataset {
        split: String,
        #[source]
        source: DatasetError,
    },
    #[error("pool split is missing labels {0:?}")]
    IncompletePool(Vec<String>),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Errors of the classification and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Negative(#[from] NegativeError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Output(String),
    #[error("seed {seed}, test example {index}: {source}")]
    Example {
        seed: u64,
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by the run description rather than by execution.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Template(_) | Error::Ingest(_) => true,
            Error::Example { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
