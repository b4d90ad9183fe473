use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading `.ts` files and dataset cards.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: malformed data row: {msg}")]
    DataRow { line: usize, msg: String },
    #[error("line {line}: missing value token '?' (missing values are not supported)")]
    MissingValue { line: usize },
    #[error("line {line}: unknown class label '{label}'")]
    UnknownLabel { line: usize, label: String },
    #[error("split header mismatch: {0}")]
    SplitMismatch(String),
    #[error("dataset card: {0}")]
    Card(String),
    #[error("empty training split")]
    EmptySplit,
}

/// Errors from distance evaluation and neighbor retrieval.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(usize, usize),
    #[error("length mismatch for lockstep metric: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    EmptySeries,
    #[error("standardized euclidean distance requires channel statistics")]
    MissingStats,
    #[error("k must be positive")]
    ZeroK,
    #[error("k = {k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("unknown metric '{0}' (expected one of: ed, sed, man, dtw)")]
    UnknownMetric(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("cluster count {k} exceeds training size {n}")]
    TooManyClusters { k: usize, n: usize },
    #[error("negative pool holds {available} samples, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("vector length mismatch: {0} vs {1}")]
    Dimension(usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("expected {expected} channel names, got {got}")]
    NameCount { expected: usize, got: usize },
    #[error("inconsistent table dimensions: {0}")]
    Shape(String),
    #[error("grammar violation: {0}")]
    Grammar(String),
    #[error("unknown table format '{0}' (expected one of: dfloader, markdown, json, html)")]
    UnknownFormat(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("class set is empty")]
    EmptyClasses,
}

/// Completion backend failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("context length exceeded: {0}")]
    ContextLength(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("network failure after {attempts} attempt(s): {msg}")]
    Network { attempts: u32, msg: String },
    #[error("api error {status}: {body}")]
    Api { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Failures that no retry or further sample can fix; a run aborts on these.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Authentication(_) | BackendError::Config(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("temperature list is empty")]
    NoTemperatures,
    #[error("all {0} inference paths failed")]
    AllPathsFailed(usize),
    #[error("no parsed paths to vote over")]
    NoParsedPaths,
    #[error("fatal backend failure: {0}")]
    Fatal(BackendError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown dataset '{0}'")]
    UnknownDataset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("failed to read config {path}: {msg}")]
    File { path: PathBuf, msg: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no records to score")]
    Empty,
    #[error("method '{method}' covers {got} datasets, expected {expected}")]
    RaggedCoverage { method: String, got: usize, expected: usize },
}

/// Top-level error for pipeline and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record file {path}: {msg}")]
    Records { path: PathBuf, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
