//! Contrastive combination of positive- and negative-context scores, and
//! end-to-end classification of a single query.

use serde::{Deserialize, Serialize};

use crate::backend::{RequestMeta, ScoringBackend, ScoringRequest};
use crate::error::{DecodeError, Error, Result};
use crate::negatives::{build_negative, LabelBuckets, NegativeVariant};
use crate::rng::SeededRng;
use crate::templates::{render_prompt, Task};
use crate::types::{DemonstrationSet, LabelId, LabeledExample, ScoreVector};

/// Where InputSwap draws its replacement inputs from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapPool {
    /// The whole candidate pool (selected demonstrations included, query excluded).
    #[default]
    Pool,
    /// Only the demonstrations selected for this query.
    Demonstrations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub alpha: f64,
    pub variant: NegativeVariant,
    #[serde(default)]
    pub swap_pool: SwapPool,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            variant: NegativeVariant::InputSwap,
            swap_pool: SwapPool::Pool,
        }
    }
}

impl ContrastConfig {
    pub fn new(alpha: f64, variant: NegativeVariant) -> Result<Self> {
        let cfg = Self {
            alpha,
            variant,
            swap_pool: SwapPool::Pool,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `z_pos + alpha * (z_pos - z_neg)`, elementwise. With `alpha == 0` the
/// positive vector is returned unchanged.
pub fn contrastive_combine(
    positive: &ScoreVector,
    negative: &ScoreVector,
    alpha: f64,
) -> Result<ScoreVector, DecodeError> {
    if positive.len() != negative.len() {
        return Err(DecodeError::LengthMismatch {
            positive: positive.len(),
            negative: negative.len(),
        });
    }
    if !alpha.is_finite() {
        return Err(DecodeError::NonFiniteInput(0));
    }
    if alpha == 0.0 {
        return Ok(positive.clone());
    }
    let out: Vec<f64> = positive
        .as_slice()
        .iter()
        .zip(negative.as_slice())
        .map(|(p, n)| p + alpha * (p - n))
        .collect();
    ScoreVector::new(out).map_err(|_| {
        let i = positive
            .as_slice()
            .iter()
            .zip(negative.as_slice())
            .position(|(p, n)| !(p + alpha * (p - n)).is_finite())
            .unwrap_or(0);
        DecodeError::NonFiniteInput(i)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub predicted: LabelId,
    pub combined: ScoreVector,
    pub positive: ScoreVector,
    pub negative: Option<ScoreVector>,
    pub positive_prompt: String,
    pub negative_prompt: Option<String>,
}

/// Scores of one query under its positive context and, optionally, a
/// negative context. Independent of alpha, so it can be cached and recombined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextScores {
    pub positive: ScoreVector,
    pub negative: Option<ScoreVector>,
    pub positive_prompt: String,
    pub negative_prompt: Option<String>,
    #[serde(skip)]
    pub negative_demos: Option<DemonstrationSet>,
}

impl ContextScores {
    /// Combines for `alpha`; a missing negative is only allowed at `alpha == 0`.
    pub fn combine(&self, alpha: f64) -> Result<ClassificationResult> {
        let combined = match (&self.negative, alpha == 0.0) {
            (_, true) => self.positive.clone(),
            (Some(neg), false) => contrastive_combine(&self.positive, neg, alpha)?,
            (None, false) => {
                return Err(Error::Config("negative scores needed for alpha > 0".into()));
            }
        };
        Ok(ClassificationResult {
            predicted: combined.argmax(),
            combined,
            positive: self.positive.clone(),
            negative: self.negative.clone(),
            positive_prompt: self.positive_prompt.clone(),
            negative_prompt: self.negative_prompt.clone(),
        })
    }
}

fn score_context(
    task: &Task,
    demos: &DemonstrationSet,
    query: &LabeledExample,
    backend: &dyn ScoringBackend,
) -> Result<(ScoreVector, String)> {
    let prompt = render_prompt(&task.template, demos, query)?;
    let request = ScoringRequest {
        prompt,
        candidates: task.template.completions().to_vec(),
        meta: RequestMeta::new(demos, query),
    };
    let scores = backend.score(&request)?;
    if scores.len() != task.space.len() {
        return Err(crate::error::BackendError::InvalidRequest(format!(
            "backend returned {} scores for {} labels",
            scores.len(),
            task.space.len()
        ))
        .into());
    }
    Ok((scores, request.prompt))
}

/// Builds the negative context (when `with_negative`) and scores both contexts.
#[allow(clippy::too_many_arguments)]
pub fn score_contexts(
    query: &LabeledExample,
    demos: &DemonstrationSet,
    pool: &[LabeledExample],
    task: &Task,
    cfg: &ContrastConfig,
    backend: &dyn ScoringBackend,
    rng: &mut SeededRng,
    with_negative: bool,
) -> Result<ContextScores> {
    let (positive, positive_prompt) = score_context(task, demos, query, backend)?;
    if !with_negative {
        return Ok(ContextScores {
            positive,
            negative: None,
            positive_prompt,
            negative_prompt: None,
            negative_demos: None,
        });
    }
    let negative_demos = build_negative_demos(query, demos, pool, task, cfg, rng)?;
    let (negative, negative_prompt) = score_context(task, &negative_demos, query, backend)?;
    Ok(ContextScores {
        positive,
        negative: Some(negative),
        positive_prompt,
        negative_prompt: Some(negative_prompt),
        negative_demos: Some(negative_demos),
    })
}

/// The negative demonstration set for `query` under `cfg`.
pub fn build_negative_demos(
    query: &LabeledExample,
    demos: &DemonstrationSet,
    pool: &[LabeledExample],
    task: &Task,
    cfg: &ContrastConfig,
    rng: &mut SeededRng,
) -> Result<DemonstrationSet> {
    let source = match cfg.swap_pool {
        SwapPool::Pool => pool,
        SwapPool::Demonstrations => demos.as_slice(),
    };
    let buckets = LabelBuckets::new(source, task.space.len(), Some(query));
    Ok(build_negative(cfg.variant, demos, &buckets, rng)?)
}

/// Classifies `query` with contrastive decoding. At `alpha == 0` the negative
/// pass is skipped and the result equals [`regular_classify`].
#[allow(clippy::too_many_arguments)]
pub fn classify(
    query: &LabeledExample,
    demos: &DemonstrationSet,
    pool: &[LabeledExample],
    task: &Task,
    cfg: &ContrastConfig,
    backend: &dyn ScoringBackend,
    rng: &mut SeededRng,
) -> Result<ClassificationResult> {
    cfg.validate()?;
    if cfg.alpha == 0.0 {
        return regular_classify(query, demos, task, backend);
    }
    score_contexts(query, demos, pool, task, cfg, backend, rng, true)?.combine(cfg.alpha)
}

/// Plain in-context classification: argmax of the positive-context scores.
pub fn regular_classify(
    query: &LabeledExample,
    demos: &DemonstrationSet,
    task: &Task,
    backend: &dyn ScoringBackend,
) -> Result<ClassificationResult> {
    let (positive, positive_prompt) = score_context(task, demos, query, backend)?;
    Ok(ClassificationResult {
        predicted: positive.argmax(),
        combined: positive.clone(),
        positive,
        negative: None,
        positive_prompt,
        negative_prompt: None,
    })
}
