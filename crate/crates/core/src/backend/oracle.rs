//! Synthetic scoring backend with two separable knowledge sources: a fixed
//! per-label prior and a mapping term read off the demonstrations.
//!
//! `score(y) = prior_weight * prior[y]
//!           + mapping_weight * sum_i jaccard(query, demo_i) * [label_i == y]`

use serde::{Deserialize, Serialize};

use super::{RequestMeta, ScoringBackend, ScoringRequest};
use crate::error::BackendError;
use crate::text::token_set;
use crate::types::ScoreVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleParams {
    /// Per-label bias, one entry per label.
    pub prior: Vec<f64>,
    #[serde(default = "one")]
    pub prior_weight: f64,
    #[serde(default = "one")]
    pub mapping_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticOracleParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        let weights_ok = self.prior_weight.is_finite()
            && self.mapping_weight.is_finite()
            && self.prior_weight >= 0.0
            && self.mapping_weight >= 0.0;
        if !weights_ok || self.prior.iter().any(|p| !p.is_finite()) {
            return Err(BackendError::InvalidRequest(
                "oracle weights must be finite and non-negative, prior finite".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluates the oracle formula for `num_labels` labels. Similarity is the
/// Jaccard overlap of the query input's and each demo input's token sets.
pub fn oracle_score(params: &SyntheticOracleParams, meta: &RequestMeta, num_labels: usize) -> Vec<f64> {
    let mut scores: Vec<f64> = (0..num_labels)
        .map(|y| params.prior_weight * params.prior.get(y).copied().unwrap_or(0.0))
        .collect();
    if params.mapping_weight == 0.0 || meta.demos.is_empty() {
        return scores;
    }
    let query = token_set(&meta.query_input);
    let mut mapping = vec![0.0; num_labels];
    for demo in &meta.demos {
        if let Some(m) = mapping.get_mut(demo.label.0) {
            let d = token_set(&demo.input);
            let inter = query.intersection(&d).count();
            let union = query.len() + d.len() - inter;
            if union > 0 {
                *m += inter as f64 / union as f64;
            }
        }
    }
    for (s, m) in scores.iter_mut().zip(mapping) {
        *s += params.mapping_weight * m;
    }
    scores
}

#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    params: SyntheticOracleParams,
}

impl SyntheticOracle {
    pub fn new(params: SyntheticOracleParams) -> Result<Self, BackendError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SyntheticOracleParams {
        &self.params
    }
}

impl ScoringBackend for SyntheticOracle {
    fn score(&self, request: &ScoringRequest) -> Result<ScoreVector, BackendError> {
        request.validate()?;
        if self.params.prior.len() != request.candidates.len() {
            return Err(BackendError::InvalidRequest(format!(
                "oracle prior has {} entries for {} candidates",
                self.params.prior.len(),
                request.candidates.len()
            )));
        }
        Ok(ScoreVector::new(oracle_score(&self.params, &request.meta, request.candidates.len()))?)
    }

    fn identity(&self) -> String {
        format!(
            "oracle(prior={:?}, prior_weight={}, mapping_weight={})",
            self.params.prior, self.params.prior_weight, self.params.mapping_weight
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LabelId, LabeledExample};

    fn meta(query: &str, demos: &[(&str, usize)]) -> RequestMeta {
        RequestMeta {
            demos: demos.iter().map(|(t, l)| LabeledExample::new(*t, LabelId(*l))).collect(),
            query_context: None,
            query_input: query.to_string(),
        }
    }

    fn params(prior: Vec<f64>, beta: f64, gamma: f64) -> SyntheticOracleParams {
        SyntheticOracleParams {
            prior,
            prior_weight: beta,
            mapping_weight: gamma,
        }
    }

    #[test]
    fn empty_demos_give_pure_prior() {
        let p = params(vec![0.3, -1.25, 2.0], 2.0, 5.0);
        assert_eq!(oracle_score(&p, &meta("q", &[]), 3), vec![0.6, -2.5, 4.0]);
    }

    #[test]
    fn identical_demo_gives_gamma_gap() {
        let p = params(vec![0.7, 0.1], 0.0, 1.0);
        let s = oracle_score(&p, &meta("same words here", &[("same words here", 1)]), 2);
        assert_eq!(s[1] - s[0], 1.0);
    }

    #[test]
    fn worked_example() {
        // jaccard("a b c d", "a b c d e") = 4/5
        let p = params(vec![0.5, 0.0], 1.0, 1.0);
        let s = oracle_score(&p, &meta("a b c d", &[("a b c d e", 1)]), 2);
        assert_eq!(s, vec![0.5, 0.8]);
    }

    #[test]
    fn gamma_zero_ignores_demos() {
        let p = params(vec![1.0, 2.0], 1.0, 0.0);
        let a = oracle_score(&p, &meta("x y", &[("x y", 0), ("x", 0)]), 2);
        let b = oracle_score(&p, &meta("x y", &[]), 2);
        assert_eq!(a, b);
    }

    #[test]
    fn equal_similarity_mapping_cancels() {
        let p = params(vec![0.0, 0.2], 1.0, 1.0);
        let s = oracle_score(&p, &meta("a b", &[("a c", 0), ("b c", 1)]), 2);
        assert_eq!(s[1] - s[0], 0.2);
    }

    #[test]
    fn linear_in_knowledge_sources() {
        let m = meta("a b c", &[("a b", 0), ("c d", 1), ("a c", 1)]);
        let prior = vec![0.4, -0.3];
        let full = oracle_score(&params(prior.clone(), 1.5, 2.5), &m, 2);
        let prior_only = oracle_score(&params(prior.clone(), 1.0, 0.0), &m, 2);
        let map_only = oracle_score(&params(vec![0.0, 0.0], 0.0, 1.0), &m, 2);
        for i in 0..2 {
            assert!((full[i] - (1.5 * prior_only[i] + 2.5 * map_only[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_misaligned_prior() {
        let o = SyntheticOracle::new(params(vec![0.0, 0.0, 0.0], 1.0, 1.0)).unwrap();
        let req = ScoringRequest {
            prompt: String::new(),
            candidates: vec!["a".into(), "b".into()],
            meta: meta("q", &[]),
        };
        assert!(o.score(&req).is_err());
        assert!(SyntheticOracle::new(params(vec![0.0], -1.0, 1.0)).is_err());
    }
}
