//! The scoring contract and its implementations.
//!
//! A backend receives the rendered prompt, the candidate continuations (one per
//! label, in label-space order) and a structured view of the same context, and
//! returns one log-score per candidate.

mod mock;
mod oracle;
mod remote;

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use mock::{prompt_hash, MockBackend, MockRecord, MockTable};
pub use oracle::{oracle_score, SyntheticOracle, SyntheticOracleParams};
pub use remote::{HttpTransport, RemoteBackend, RemoteConfig, RemoteEmbeddingProvider, ScoreMode};

use crate::error::BackendError;
use crate::types::{DemonstrationSet, LabeledExample, ScoreVector};

/// Structured view of a prompt for backends that work on examples rather
/// than text. The query's gold label is never included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestMeta {
    pub demos: Vec<LabeledExample>,
    pub query_context: Option<String>,
    pub query_input: String,
}

impl RequestMeta {
    pub fn new(demos: &DemonstrationSet, query: &LabeledExample) -> Self {
        Self {
            demos: demos.as_slice().to_vec(),
            query_context: query.context.clone(),
            query_input: query.input.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoringRequest {
    pub prompt: String,
    pub candidates: Vec<String>,
    pub meta: RequestMeta,
}

impl ScoringRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.candidates.is_empty() {
            return Err(BackendError::InvalidRequest("no candidates".into()));
        }
        Ok(())
    }
}

/// Scores candidate continuations of a prompt.
///
/// Mock and oracle backends are pure functions of the request. Implementations
/// must be callable from several threads at once.
pub trait ScoringBackend: Send + Sync {
    fn score(&self, request: &ScoringRequest) -> Result<ScoreVector, BackendError>;

    /// Upper bound on concurrent `score` calls the evaluation harness may issue.
    fn max_in_flight(&self) -> usize {
        std::thread::available_parallelism().map_or(4, |n| n.get())
    }

    /// Human-readable identity recorded in reports.
    fn identity(&self) -> String;
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for Arc<B> {
    fn score(&self, request: &ScoringRequest) -> Result<ScoreVector, BackendError> {
        (**self).score(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }

    fn identity(&self) -> String {
        (**self).identity()
    }
}

/// Wraps a backend and records every scored (prompt, candidate) pair, so a run
/// can be replayed later through [`MockBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    table: Mutex<MockTable>,
}

impl<B: ScoringBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            table: Mutex::new(MockTable::default()),
        }
    }

    pub fn table(&self) -> MockTable {
        self.table.lock().expect("recording table poisoned").clone()
    }
}

impl<B: ScoringBackend> ScoringBackend for RecordingBackend<B> {
    fn score(&self, request: &ScoringRequest) -> Result<ScoreVector, BackendError> {
        let scores = self.inner.score(request)?;
        let mut table = self.table.lock().expect("recording table poisoned");
        for (cand, s) in request.candidates.iter().zip(scores.as_slice()) {
            table.insert(&request.prompt, cand, *s);
        }
        Ok(scores)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

/// Backend selection as written in a run config (`kind = "mock" | "oracle" | "remote"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock { table: PathBuf },
    Oracle(SyntheticOracleParams),
    Remote(RemoteConfig),
}

impl BackendConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Mock { .. } => "mock",
            Self::Oracle(_) => "oracle",
            Self::Remote(_) => "remote",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn ScoringBackend>, BackendError> {
        Ok(match self {
            Self::Mock { table } => Arc::new(MockBackend::load(table)?),
            Self::Oracle(params) => Arc::new(SyntheticOracle::new(params.clone())?),
            Self::Remote(cfg) => Arc::new(RemoteBackend::new(cfg.clone())?),
        })
    }
}
