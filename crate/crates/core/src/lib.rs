//! In-context contrastive decoding for few-shot label classification.
//!
//! A query is scored twice by a language-model backend: once under the
//! selected demonstrations and once under a negative set whose input-label
//! mapping is broken. The final label scores are
//! `z_pos + alpha * (z_pos - z_neg)`, which cancels what both contexts share
//! (prior knowledge, label bias) and amplifies what the correct mapping adds.

pub mod backend;
pub mod config;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod negatives;
pub mod rng;
pub mod selection;
pub mod synthetic;
pub mod templates;
pub mod text;
pub mod types;

pub use backend::{
    BackendConfig, MockBackend, MockTable, RecordingBackend, RemoteBackend, RemoteConfig, ScoringBackend,
    ScoringRequest, SyntheticOracle, SyntheticOracleParams,
};
pub use config::RunConfig;
pub use decoder::{classify, contrastive_combine, regular_classify, ClassificationResult, ContrastConfig, SwapPool};
pub use error::{Error, Result};
pub use eval::{kl_divergence, EvalReport, Experiment};
pub use ingest::{Dataset, DatasetManifest};
pub use negatives::NegativeVariant;
pub use rng::SeededRng;
pub use selection::{SelectionMethod, Selector};
pub use templates::{builtin, render_example, render_prompt, Task, TaskTemplate};
pub use types::{validate_dataset, DemonstrationSet, LabelId, LabelSpace, LabeledExample, ScoreVector};
