//! Run configuration, read from TOML.
//!
//! ```toml
//! dataset = "data/sst2.toml"     # manifest, relative to this file
//! selection = "random"           # random | bm25 | topk
//! shots = 16
//! seeds = [0, 1, 2]
//! max_examples = 200             # 0 evaluates the full test split
//! alpha = 1.0
//! variant = "input"              # input | label | null
//! swap_pool = "pool"             # pool | demonstrations
//! order = "ascending"            # retrieved demos, least similar first
//! out_dir = "runs/sst2"
//!
//! [bm25]
//! k1 = 1.5
//! b = 0.75
//!
//! [embedding]
//! kind = "tfidf"                 # or "remote" with the remote backend fields
//!
//! [backend]
//! kind = "oracle"                # mock | oracle | remote
//! prior = [0.0, 1.0]
//! prior_weight = 1.0
//! mapping_weight = 1.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, RemoteConfig};
use crate::decoder::{ContrastConfig, SwapPool};
use crate::error::{Error, Result};
use crate::negatives::NegativeVariant;
use crate::selection::{Bm25Params, DemoOrder, SelectionMethod};

pub const DEFAULT_SHOTS: usize = 16;
pub const DEFAULT_MAX_EXAMPLES: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingConfig {
    #[default]
    Tfidf,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest path.
    pub dataset: PathBuf,
    #[serde(default = "default_selection")]
    pub selection: SelectionMethod,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_examples")]
    pub max_examples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_variant")]
    pub variant: NegativeVariant,
    #[serde(default)]
    pub swap_pool: SwapPool,
    #[serde(default)]
    pub order: DemoOrder,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub bm25: Bm25Params,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    pub backend: BackendConfig,
}

fn default_selection() -> SelectionMethod {
    SelectionMethod::Random
}
fn default_shots() -> usize {
    DEFAULT_SHOTS
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_max_examples() -> usize {
    DEFAULT_MAX_EXAMPLES
}
fn default_alpha() -> f64 {
    1.0
}
fn default_variant() -> NegativeVariant {
    NegativeVariant::InputSwap
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, backend: BackendConfig) -> Self {
        Self {
            dataset: dataset.into(),
            selection: default_selection(),
            shots: DEFAULT_SHOTS,
            seeds: default_seeds(),
            max_examples: DEFAULT_MAX_EXAMPLES,
            alpha: default_alpha(),
            variant: default_variant(),
            swap_pool: SwapPool::Pool,
            order: DemoOrder::Ascending,
            out_dir: None,
            bm25: Bm25Params::default(),
            embedding: EmbeddingConfig::Tfidf,
            backend,
        }
    }

    /// Reads a config file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.dataset = base.join(&self.dataset);
        if let Some(out) = &self.out_dir {
            self.out_dir = Some(base.join(out));
        }
        if let BackendConfig::Mock { table } = &mut self.backend {
            *table = base.join(&*table);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.contrast().validate()?;
        self.bm25.validate()?;
        Ok(())
    }

    pub fn contrast(&self) -> ContrastConfig {
        ContrastConfig {
            alpha: self.alpha,
            variant: self.variant,
            swap_pool: self.swap_pool,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_applied() {
        let cfg = RunConfig::parse("dataset = \"d.toml\"\n[backend]\nkind = \"oracle\"\nprior = [0.0, 1.0]\n").unwrap();
        assert_eq!(cfg.shots, 16);
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        assert_eq!(cfg.alpha, 1.0);
        assert_eq!(cfg.variant, NegativeVariant::InputSwap);
        assert_eq!(cfg.max_examples, 200);
        assert_eq!(cfg.selection, SelectionMethod::Random);
        assert_eq!(cfg.bm25, Bm25Params { k1: 1.5, b: 0.75 });
    }

    #[test]
    fn rejects_bad_values() {
        let base = "dataset = \"d\"\n[backend]\nkind = \"oracle\"\nprior = [0.0, 1.0]\n";
        assert!(RunConfig::parse(&format!("seeds = []\n{base}")).is_err());
        assert!(RunConfig::parse(&format!("alpha = -1.0\n{base}")).is_err());
        assert!(RunConfig::parse(&format!("bogus = 1\n{base}")).is_err());
        assert!(RunConfig::parse("dataset = \"d\"\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::parse(
            "dataset = \"d\"\nselection = \"bm25\"\nvariant = \"label\"\n[backend]\nkind = \"mock\"\ntable = \"t.jsonl\"\n",
        )
        .unwrap();
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.backend, BackendConfig::Mock { table: "/base/t.jsonl".into() });
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
