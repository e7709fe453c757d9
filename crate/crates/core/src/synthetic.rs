//! Generated binary dataset where demonstration evidence and a label prior
//! disagree. Used with the synthetic oracle backend to exercise the decoding
//! pipeline without a language model.
//!
//! Every text is a bag of shared filler words, cue words from its own class
//! vocabulary, and random noise words. Same-class texts overlap on fillers and
//! cues; cross-class texts only on fillers (and the occasional noise word).
//! The pool is imbalanced toward label 0; the oracle prior favours label 1.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::SyntheticOracleParams;
use crate::ingest::Dataset;
use crate::rng::SeededRng;
use crate::templates::{Task, TaskTemplate};
use crate::types::{validate_dataset, LabelId, LabelSpace, LabeledExample};

const FILLERS: &[&str] = &["this", "one", "felt", "rather"];
const CLASS_STEMS: [&str; 2] = ["lum", "dar"];
const LABEL_NAMES: [&str; 2] = ["lumen", "dusk"];
const PATTERN: &str = "Text: \"<X>\" Tone: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDatasetSpec {
    pub pool_size: usize,
    pub test_size: usize,
    /// Fraction of pool examples with label 0.
    pub pool_majority: f64,
    /// Cue words per class vocabulary.
    pub cue_vocab: usize,
    /// Cue words per text.
    pub cues_per_text: usize,
    /// Noise vocabulary size and noise words per text.
    pub noise_vocab: usize,
    pub noise_per_text: usize,
    pub seed: u64,
}

impl Default for BiasDatasetSpec {
    fn default() -> Self {
        Self {
            pool_size: 400,
            test_size: 200,
            pool_majority: 0.8,
            cue_vocab: 6,
            cues_per_text: 3,
            noise_vocab: 200,
            noise_per_text: 2,
            seed: 2024,
        }
    }
}

/// Oracle parameters paired with the default spec: prior toward label 1,
/// mapping evidence from the demonstrations.
pub fn default_oracle_params() -> SyntheticOracleParams {
    SyntheticOracleParams {
        prior: vec![0.0, 1.0],
        prior_weight: 1.0,
        mapping_weight: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasDataset {
    pub pool: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

fn sample_distinct(rng: &mut SeededRng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx
}

fn text(rng: &mut SeededRng, spec: &BiasDatasetSpec, label: usize) -> String {
    let mut words: Vec<String> = FILLERS.iter().map(|w| w.to_string()).collect();
    for c in sample_distinct(rng, spec.cue_vocab, spec.cues_per_text) {
        words.push(format!("{}{c}", CLASS_STEMS[label]));
    }
    for n in sample_distinct(rng, spec.noise_vocab, spec.noise_per_text) {
        words.push(format!("w{n}"));
    }
    // Random word order.
    for i in (1..words.len()).rev() {
        let j = rng.below(i + 1);
        words.swap(i, j);
    }
    words.join(" ")
}

pub fn generate(spec: &BiasDatasetSpec) -> BiasDataset {
    let mut rng = SeededRng::new(spec.seed);
    let majority = (spec.pool_size as f64 * spec.pool_majority).round() as usize;
    let pool = (0..spec.pool_size)
        .map(|i| {
            let label = usize::from(i >= majority);
            LabeledExample::new(text(&mut rng, spec, label), LabelId(label))
        })
        .collect::<Vec<_>>();
    // Shuffle pool order.
    let mut order: Vec<usize> = (0..pool.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    let pool = order.into_iter().map(|i| pool[i].clone()).collect();
    let test = (0..spec.test_size)
        .map(|i| {
            let label = i % 2;
            LabeledExample::new(text(&mut rng, spec, label), LabelId(label))
        })
        .collect();
    BiasDataset { pool, test }
}

pub fn task() -> Task {
    let space = LabelSpace::new(LABEL_NAMES.map(|n| (n, n))).expect("two distinct labels");
    let template = TaskTemplate::for_space("synthetic", PATTERN, "\n", &space).expect("valid pattern");
    Task::new(template, space).expect("matching space")
}

/// Generated data as an in-memory dataset.
pub fn dataset(spec: &BiasDatasetSpec) -> Dataset {
    let data = generate(spec);
    let task = task();
    let pool_report = validate_dataset(&data.pool, &task.space).expect("generated labels are valid");
    Dataset {
        name: "synthetic-bias".into(),
        task,
        pool: data.pool,
        test: data.test,
        pool_report,
    }
}

fn write_split(path: &Path, examples: &[LabeledExample], names: &[&str]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        let rec = serde_json::json!({ "text": ex.input, "label": names[ex.label.0] });
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `pool.jsonl`, `test.jsonl`, `manifest.toml` and a ready-to-run
/// `run.toml` (oracle backend) into `dir`.
pub fn write_bundle(dir: &Path, spec: &BiasDatasetSpec, oracle: &SyntheticOracleParams) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let data = generate(spec);
    write_split(&dir.join("pool.jsonl"), &data.pool, &LABEL_NAMES)?;
    write_split(&dir.join("test.jsonl"), &data.test, &LABEL_NAMES)?;
    let manifest = format!(
        "task = \"synthetic-bias\"\n\
         template_file = \"template.toml\"\n\n\
         [[labels]]\nname = \"lumen\"\nverbalizer = \"lumen\"\n\n\
         [[labels]]\nname = \"dusk\"\nverbalizer = \"dusk\"\n\n\
         [splits]\npool = \"pool.jsonl\"\ntest = \"test.jsonl\"\n\n\
         [declared_sizes]\npool = {}\ntest = {}\n",
        data.pool.len(),
        data.test.len()
    );
    fs::write(dir.join("manifest.toml"), manifest)?;
    let template = format!(
        "name = \"synthetic\"\npattern = {}\nseparator = \"\\n\"\n",
        toml::Value::String(PATTERN.into())
    );
    fs::write(dir.join("template.toml"), template)?;
    let prior = oracle
        .prior
        .iter()
        .map(|p| format!("{p:?}"))
        .collect::<Vec<_>>()
        .join(", ");
    let run = format!(
        "dataset = \"manifest.toml\"\n\
         selection = \"random\"\nshots = 16\nseeds = [0, 1, 2]\nmax_examples = {}\n\
         alpha = 1.0\nvariant = \"input\"\nout_dir = \"out\"\n\n\
         [backend]\nkind = \"oracle\"\nprior = [{prior}]\nprior_weight = {:?}\nmapping_weight = {:?}\n",
        data.test.len(),
        oracle.prior_weight,
        oracle.mapping_weight
    );
    fs::write(dir.join("run.toml"), run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::jaccard;

    #[test]
    fn deterministic_and_sized() {
        let spec = BiasDatasetSpec::default();
        let a = generate(&spec);
        assert_eq!(a, generate(&spec));
        assert_eq!(a.pool.len(), 400);
        assert_eq!(a.test.len(), 200);
        let zeros = a.pool.iter().filter(|e| e.label == LabelId(0)).count();
        assert_eq!(zeros, 320);
    }

    #[test]
    fn same_class_overlaps_more() {
        let d = generate(&BiasDatasetSpec::default());
        let q = &d.test[1];
        let same: Vec<f64> = d.pool.iter().filter(|e| e.label == q.label).map(|e| jaccard(&q.input, &e.input)).collect();
        let diff: Vec<f64> = d.pool.iter().filter(|e| e.label != q.label).map(|e| jaccard(&q.input, &e.input)).collect();
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(m(&same) > m(&diff));
    }
}
