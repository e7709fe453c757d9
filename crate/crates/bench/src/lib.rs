//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use iccd_core::synthetic::{self, default_oracle_params, BiasDatasetSpec};
use iccd_core::{BackendConfig, Dataset, Experiment, RunConfig, SyntheticOracle};

pub fn dataset() -> Dataset {
    synthetic::dataset(&BiasDatasetSpec::default())
}

/// Oracle-backed experiment over `max_examples` queries with one seed.
pub fn experiment(max_examples: usize) -> Experiment {
    let mut cfg = RunConfig::new("synthetic", BackendConfig::Oracle(default_oracle_params()));
    cfg.max_examples = max_examples;
    cfg.seeds = vec![0];
    let backend = Arc::new(SyntheticOracle::new(default_oracle_params()).expect("valid params"));
    Experiment::new(dataset(), backend, cfg).expect("valid experiment")
}
