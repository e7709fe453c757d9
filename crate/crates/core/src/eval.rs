//! Experiment execution: per-seed accuracy, KL diagnostics, alpha and shot sweeps.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::backend::{RemoteEmbeddingProvider, ScoringBackend};
use crate::config::{EmbeddingConfig, RunConfig};
use crate::decoder::{build_negative_demos, contrastive_combine, score_contexts, ContextScores, ContrastConfig};
use crate::error::{DecodeError, Error, Result};
use crate::ingest::{Dataset, DatasetManifest};
use crate::rng::SeededRng;
use crate::selection::{EmbeddingProvider, SelectionMethod, Selector, TfIdfProvider};
use crate::templates::render_prompt;
use crate::types::{DemonstrationSet, LabelId, LabeledExample, ScoreVector};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const KL_DIRECTION: &str = "KL(positive || negative)";

/// `sum_i P_i ln(P_i / Q_i)` with `P = softmax(positive)`, `Q = softmax(negative)`
/// over the label set.
pub fn kl_divergence(positive: &ScoreVector, negative: &ScoreVector) -> Result<f64, DecodeError> {
    if positive.len() != negative.len() {
        return Err(DecodeError::LengthMismatch {
            positive: positive.len(),
            negative: negative.len(),
        });
    }
    let lp = positive.log_softmax();
    let lq = negative.log_softmax();
    Ok(lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); `None` for fewer than two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(var.sqrt())
}

/// Cached scores of one test example.
#[derive(Debug, Clone)]
pub struct ScoredExample {
    pub index: usize,
    pub gold: LabelId,
    pub scores: ContextScores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleRecord {
    pub format_version: u32,
    pub seed: u64,
    pub index: usize,
    pub gold: LabelId,
    pub predicted: LabelId,
    pub regular_predicted: LabelId,
    pub positive: ScoreVector,
    pub negative: Option<ScoreVector>,
    pub combined: ScoreVector,
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub regular_accuracy: f64,
    pub mean_kl: Option<f64>,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub dataset: String,
    pub backend: String,
    pub method: String,
    pub selection: SelectionMethod,
    pub shots: usize,
    pub alpha: f64,
    pub seeds: Vec<SeedResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: Option<f64>,
    pub regular_mean_accuracy: f64,
    pub regular_std_accuracy: Option<f64>,
    pub mean_kl: Option<f64>,
    pub kl_direction: &'static str,
    pub config: Option<RunConfig>,
    #[serde(skip)]
    pub records: Vec<ExampleRecord>,
}

impl EvalReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.accuracy).collect()
    }

    /// Table-style line: method, mean and std of accuracy (one decimal).
    pub fn summary_line(&self) -> String {
        format_line(&self.method, self.mean_accuracy, self.std_accuracy)
    }

    pub fn regular_line(&self) -> String {
        format_line("regular", self.regular_mean_accuracy, self.regular_std_accuracy)
    }

    /// Writes `summary.json` and `records.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let summary = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join("records.jsonl"))?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

fn format_line(method: &str, mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{method}\tmean={mean:.1}\tstd={s:.2}"),
        None => format!("{method}\tmean={mean:.1}\tstd=-"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotRow {
    pub shots: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: Option<f64>,
    pub regular_mean_accuracy: f64,
}

/// Everything needed to run one configuration: data, backend and selection state.
pub struct Experiment {
    pub dataset: Dataset,
    pub backend: Arc<dyn ScoringBackend>,
    pub selector: Selector,
    pub config: RunConfig,
}

impl Experiment {
    /// Loads the dataset and builds backend and selector from `config`.
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let manifest = DatasetManifest::load(&config.dataset)?;
        let dataset = Dataset::load(&manifest)?;
        let backend = config.backend.build()?;
        Self::new(dataset, backend, config.clone())
    }

    pub fn new(dataset: Dataset, backend: Arc<dyn ScoringBackend>, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let selector = match config.selection {
            SelectionMethod::Random => Selector::random(),
            SelectionMethod::Bm25 => Selector::bm25(&dataset.pool, config.bm25, config.order)?,
            SelectionMethod::TopK => {
                let provider: Arc<dyn EmbeddingProvider> = match &config.embedding {
                    EmbeddingConfig::Tfidf => {
                        let texts: Vec<String> = dataset.pool.iter().map(LabeledExample::retrieval_text).collect();
                        Arc::new(TfIdfProvider::fit(&texts))
                    }
                    EmbeddingConfig::Remote(r) => Arc::new(RemoteEmbeddingProvider::new(r)?),
                };
                Selector::topk(&dataset.pool, provider, config.order)?
            }
        };
        Ok(Self {
            dataset,
            backend,
            selector,
            config,
        })
    }

    /// Test examples under the configured cap, in file order.
    pub fn test_examples(&self) -> &[LabeledExample] {
        let n = match self.config.max_examples {
            0 => self.dataset.test.len(),
            cap => cap.min(self.dataset.test.len()),
        };
        &self.dataset.test[..n]
    }

    pub fn method_name(&self) -> String {
        if self.config.alpha == 0.0 {
            "regular".to_string()
        } else {
            format!("iccd[{}]", self.config.variant)
        }
    }

    /// Scores every test example for one seed. Each example gets its own
    /// random stream derived from `(seed, index)`, so results do not depend on
    /// scheduling. The first failing example (by index) aborts the run.
    pub fn score_seed(&self, seed: u64, shots: usize, with_negative: bool) -> Result<Vec<ScoredExample>> {
        let test = self.test_examples();
        let contrast = self.config.contrast();
        let workers = self.backend.max_in_flight().clamp(1, test.len().max(1));
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let slots: Mutex<Vec<Option<Result<ScoredExample>>>> = Mutex::new((0..test.len()).map(|_| None).collect());

        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if failed.load(Ordering::Relaxed) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= test.len() {
                        break;
                    }
                    let out = self.score_one(seed, i, &test[i], shots, &contrast, with_negative);
                    if out.is_err() {
                        failed.store(true, Ordering::Relaxed);
                    }
                    slots.lock().expect("slots poisoned")[i] = Some(out);
                });
            }
        });

        let mut scored = Vec::with_capacity(test.len());
        for (i, slot) in slots.into_inner().expect("slots poisoned").into_iter().enumerate() {
            match slot {
                Some(Ok(s)) => scored.push(s),
                Some(Err(e)) => {
                    return Err(Error::Example {
                        seed,
                        index: i,
                        source: Box::new(e),
                    })
                }
                // Skipped after an earlier failure; the failing slot comes later.
                None => continue,
            }
        }
        if scored.len() != test.len() {
            return Err(Error::Config("seed run aborted".into()));
        }
        Ok(scored)
    }

    /// Demonstration and negative sets used for test example `index` under `seed`,
    /// drawn exactly as during evaluation.
    pub fn contexts(&self, seed: u64, index: usize) -> Result<(DemonstrationSet, DemonstrationSet)> {
        let query = self.test_query(index)?;
        let mut rng = SeededRng::for_stream(seed, index as u64);
        let demos = self.selector.select(&self.dataset.pool, query, self.config.shots, &mut rng)?;
        let negative = build_negative_demos(
            query,
            &demos,
            &self.dataset.pool,
            &self.dataset.task,
            &self.config.contrast(),
            &mut rng,
        )?;
        Ok((demos, negative))
    }

    /// Positive and negative prompts for test example `index`, byte-exact.
    pub fn prompts(&self, seed: u64, index: usize) -> Result<(String, String)> {
        let query = self.test_query(index)?;
        let (demos, negative) = self.contexts(seed, index)?;
        let template = &self.dataset.task.template;
        Ok((render_prompt(template, &demos, query)?, render_prompt(template, &negative, query)?))
    }

    fn test_query(&self, index: usize) -> Result<&LabeledExample> {
        let test = self.test_examples();
        test.get(index).ok_or_else(|| {
            Error::Config(format!("example index {index} out of range (0..{})", test.len()))
        })
    }

    fn score_one(
        &self,
        seed: u64,
        index: usize,
        query: &LabeledExample,
        shots: usize,
        contrast: &ContrastConfig,
        with_negative: bool,
    ) -> Result<ScoredExample> {
        let mut rng = SeededRng::for_stream(seed, index as u64);
        let demos = self.selector.select(&self.dataset.pool, query, shots, &mut rng)?;
        let scores = score_contexts(
            query,
            &demos,
            &self.dataset.pool,
            &self.dataset.task,
            contrast,
            self.backend.as_ref(),
            &mut rng,
            with_negative,
        )?;
        Ok(ScoredExample {
            index,
            gold: query.label,
            scores,
        })
    }

    /// Runs every seed and aggregates accuracy. Negatives are scored when
    /// `alpha > 0` or `with_kl` is set.
    pub fn evaluate_with(&self, shots: usize, with_kl: bool) -> Result<EvalReport> {
        let alpha = self.config.alpha;
        let with_negative = alpha > 0.0 || with_kl;
        let mut seeds = Vec::new();
        let mut records = Vec::new();
        for &seed in &self.config.seeds {
            let scored = self.score_seed(seed, shots, with_negative)?;
            let (result, recs) = summarize_seed(seed, &scored, alpha)?;
            seeds.push(result);
            records.extend(recs);
        }
        Ok(self.build_report(seeds, records, shots, with_kl))
    }

    pub fn evaluate(&self) -> Result<EvalReport> {
        self.evaluate_with(self.config.shots, false)
    }

    /// Mean KL(positive || negative) over all test examples of all seeds.
    pub fn mean_kl(&self) -> Result<f64> {
        let report = self.evaluate_with(self.config.shots, true)?;
        Ok(report.mean_kl.unwrap_or(0.0))
    }

    /// Accuracy for each alpha, scoring each (seed, example) once and
    /// recombining the cached vectors.
    pub fn sweep_alpha(&self, alphas: &[f64]) -> Result<Vec<AlphaRow>> {
        if alphas.is_empty() {
            return Err(Error::Config("alpha sweep needs at least one value".into()));
        }
        for &a in alphas {
            ContrastConfig { alpha: a, ..self.config.contrast() }.validate()?;
        }
        let cached: Vec<Vec<ScoredExample>> = self
            .config
            .seeds
            .iter()
            .map(|&seed| self.score_seed(seed, self.config.shots, true))
            .collect::<Result<_>>()?;
        alphas
            .iter()
            .map(|&alpha| {
                let accs = cached
                    .iter()
                    .map(|scored| accuracy_at(scored, alpha))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AlphaRow {
                    alpha,
                    mean_accuracy: mean(&accs),
                    std_accuracy: sample_std(&accs),
                })
            })
            .collect()
    }

    /// One evaluation per shot count, all with the same seeds.
    pub fn sweep_shots(&self, shots: &[usize]) -> Result<Vec<ShotRow>> {
        if shots.is_empty() {
            return Err(Error::Config("shot sweep needs at least one value".into()));
        }
        if shots.contains(&0) {
            return Err(Error::Config("shot counts must be >= 1".into()));
        }
        shots
            .iter()
            .map(|&n| {
                let r = self.evaluate_with(n, false)?;
                Ok(ShotRow {
                    shots: n,
                    mean_accuracy: r.mean_accuracy,
                    std_accuracy: r.std_accuracy,
                    regular_mean_accuracy: r.regular_mean_accuracy,
                })
            })
            .collect()
    }

    fn build_report(&self, seeds: Vec<SeedResult>, records: Vec<ExampleRecord>, shots: usize, with_kl: bool) -> EvalReport {
        let accs: Vec<f64> = seeds.iter().map(|s| s.accuracy).collect();
        let reg: Vec<f64> = seeds.iter().map(|s| s.regular_accuracy).collect();
        let kls: Vec<f64> = records.iter().filter_map(|r| r.kl).collect();
        EvalReport {
            format_version: REPORT_FORMAT_VERSION,
            dataset: self.dataset.name.clone(),
            backend: self.backend.identity(),
            method: self.method_name(),
            selection: self.config.selection,
            shots,
            alpha: self.config.alpha,
            mean_accuracy: mean(&accs),
            std_accuracy: sample_std(&accs),
            regular_mean_accuracy: mean(&reg),
            regular_std_accuracy: sample_std(&reg),
            mean_kl: if with_kl && !kls.is_empty() { Some(mean(&kls)) } else { None },
            kl_direction: KL_DIRECTION,
            seeds,
            config: Some(self.config.clone()),
            records,
        }
    }
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Accuracy (percent) of the combined prediction at `alpha`.
pub fn accuracy_at(scored: &[ScoredExample], alpha: f64) -> Result<f64> {
    let mut correct = 0;
    for s in scored {
        if s.scores.combine(alpha)?.predicted == s.gold {
            correct += 1;
        }
    }
    Ok(percent(correct, scored.len()))
}

fn summarize_seed(seed: u64, scored: &[ScoredExample], alpha: f64) -> Result<(SeedResult, Vec<ExampleRecord>)> {
    let mut records = Vec::with_capacity(scored.len());
    let (mut correct, mut regular_correct) = (0, 0);
    for s in scored {
        let combined = match (&s.scores.negative, alpha == 0.0) {
            (Some(neg), false) => contrastive_combine(&s.scores.positive, neg, alpha)?,
            _ => s.scores.positive.clone(),
        };
        let predicted = combined.argmax();
        let regular_predicted = s.scores.positive.argmax();
        correct += usize::from(predicted == s.gold);
        regular_correct += usize::from(regular_predicted == s.gold);
        let kl = match &s.scores.negative {
            Some(neg) => Some(kl_divergence(&s.scores.positive, neg)?),
            None => None,
        };
        records.push(ExampleRecord {
            format_version: REPORT_FORMAT_VERSION,
            seed,
            index: s.index,
            gold: s.gold,
            predicted,
            regular_predicted,
            positive: s.scores.positive.clone(),
            negative: s.scores.negative.clone(),
            combined,
            kl,
        });
    }
    let kls: Vec<f64> = records.iter().filter_map(|r| r.kl).collect();
    Ok((
        SeedResult {
            seed,
            accuracy: percent(correct, scored.len()),
            regular_accuracy: percent(regular_correct, scored.len()),
            mean_kl: if kls.is_empty() { None } else { Some(mean(&kls)) },
            examples: scored.len(),
        },
        records,
    ))
}

/// Loads everything named in `config` and evaluates it.
pub fn evaluate(config: &RunConfig) -> Result<EvalReport> {
    Experiment::from_config(config)?.evaluate()
}

pub fn mean_kl(config: &RunConfig) -> Result<f64> {
    Experiment::from_config(config)?.mean_kl()
}

pub fn sweep_alpha(config: &RunConfig, alphas: &[f64]) -> Result<Vec<AlphaRow>> {
    Experiment::from_config(config)?.sweep_alpha(alphas)
}

pub fn sweep_shots(config: &RunConfig, shots: &[usize]) -> Result<Vec<ShotRow>> {
    Experiment::from_config(config)?.sweep_shots(shots)
}
