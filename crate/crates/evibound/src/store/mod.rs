//! Run-tracking abstraction: the evidence substrate the gates query.
//!
//! A store holds runs (status, metrics, params) and an artifact tree per run.
//! The file-backed implementation keeps every check a plain filesystem read;
//! an optional remote client speaks the experiment-tracker REST protocol.

mod fs;
mod remote;

pub use fs::FsStore;
pub use remote::RemoteStore;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
    Killed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Running => "RUNNING",
            RunStatus::Finished => "FINISHED",
            RunStatus::Failed => "FAILED",
            RunStatus::Killed => "KILLED",
        }
    }

    pub fn from_str(s: &str) -> Option<RunStatus> {
        match s {
            "RUNNING" => Some(RunStatus::Running),
            "FINISHED" => Some(RunStatus::Finished),
            "FAILED" => Some(RunStatus::Failed),
            "KILLED" => Some(RunStatus::Killed),
            _ => None,
        }
    }

    /// RUNNING is the only non-terminal state.
    pub fn is_terminal(&self) -> bool {
        !matches!(self, RunStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub status: RunStatus,
    pub metrics: IndexMap<String, f64>,
    pub params: IndexMap<String, String>,
    pub artifact_root: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactEntry {
    pub path: String,
    pub is_directory: bool,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreErrorKind {
    /// The run does not exist. Never used for transport faults.
    NotFound,
    /// Transport or availability fault; the store itself cannot be consulted.
    Unreachable,
    /// The store responded with data that cannot be interpreted.
    Corrupt,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind:?}: {detail}")]
pub struct StoreError {
    pub kind: StoreErrorKind,
    pub detail: String,
}

impl StoreError {
    pub fn not_found(detail: impl Into<String>) -> Self {
        StoreError {
            kind: StoreErrorKind::NotFound,
            detail: detail.into(),
        }
    }

    pub fn unreachable(detail: impl Into<String>) -> Self {
        StoreError {
            kind: StoreErrorKind::Unreachable,
            detail: detail.into(),
        }
    }

    pub fn corrupt(detail: impl Into<String>) -> Self {
        StoreError {
            kind: StoreErrorKind::Corrupt,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WriteError {
    #[error("illegal transition: {from:?} -> {to:?}")]
    IllegalTransition { from: RunStatus, to: RunStatus },
    #[error("run is not RUNNING (status {0:?})")]
    NotRunning(RunStatus),
    #[error("invalid artifact path {0:?}")]
    InvalidPath(String),
    #[error("metric value must be finite, got {0}")]
    NonFiniteMetric(f64),
    #[error("operation not supported by this store: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A handle to a run-tracking backend.
///
/// Readers may run concurrently; writers to distinct runs may proceed
/// concurrently; two writers to the same run are serialized by the backend.
pub trait RunStore: Send + Sync {
    fn get_run(&self, run_id: &str) -> Result<RunRecord, StoreError>;

    /// List artifacts of a run. With `recursive` set, returns every file at
    /// any depth with its full `/`-separated relative path, in lexicographic
    /// order. Non-recursive listings return the top-level entries only,
    /// directories included.
    fn list_artifacts(&self, run_id: &str, recursive: bool) -> Result<Vec<ArtifactEntry>, StoreError>;

    /// Create a fresh run in status RUNNING and return its 32-hex id.
    fn create_run(&self) -> Result<String, WriteError>;

    fn set_status(&self, run_id: &str, status: RunStatus) -> Result<(), WriteError>;

    fn log_metric(&self, run_id: &str, name: &str, value: f64) -> Result<(), WriteError>;

    fn log_param(&self, run_id: &str, name: &str, value: &str) -> Result<(), WriteError>;

    fn log_artifact(&self, run_id: &str, path: &str, bytes: &[u8]) -> Result<(), WriteError>;

    /// Cheap availability probe, used before starting a pipeline.
    fn healthcheck(&self) -> Result<(), StoreError>;

    /// Stable display locator for a run, recorded as ledger evidence.
    fn run_uri(&self, run_id: &str) -> String;
}

/// Validate a `/`-separated relative artifact path: non-empty, no leading
/// slash, no `..` or empty segments.
pub fn validate_artifact_path(path: &str) -> Result<(), WriteError> {
    if path.is_empty() || path.starts_with('/') || path.ends_with('/') {
        return Err(WriteError::InvalidPath(path.to_owned()));
    }
    for seg in path.split('/') {
        if seg.is_empty() || seg == ".." || seg == "." {
            return Err(WriteError::InvalidPath(path.to_owned()));
        }
    }
    Ok(())
}

/// Open a store from a URI: `http(s)://...` selects the remote client,
/// anything else (optionally prefixed `file://`) a filesystem root.
pub fn open_store(uri: &str) -> Result<Box<dyn RunStore>, StoreError> {
    if uri.starts_with("http://") || uri.starts_with("https://") {
        Ok(Box::new(RemoteStore::new(uri)))
    } else {
        let path = uri.strip_prefix("file://").unwrap_or(uri);
        Ok(Box::new(FsStore::open(path)))
    }
}
