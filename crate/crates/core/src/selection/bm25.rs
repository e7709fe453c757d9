//! Okapi BM25 over a fixed document pool.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::SelectionError;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.k1 > 0.0 && self.k1.is_finite() && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(SelectionError::InvalidBm25Params { k1: self.k1, b: self.b })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<usize>,
    doc_freqs: HashMap<String, usize>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S], params: Bm25Params) -> Result<Self, SelectionError> {
        params.validate()?;
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut doc_freqs: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let tokens = tokenize(doc.as_ref());
            doc_lens.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freqs.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let total: usize = doc_lens.iter().sum();
        let avg_len = if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 };
        Ok(Self {
            params,
            term_freqs,
            doc_lens,
            doc_freqs,
            avg_len,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lens.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freqs.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score of document `doc` for `query`, summed over query tokens
    /// (repeated query tokens count repeatedly).
    pub fn score(&self, query: &str, doc: usize) -> Result<f64, SelectionError> {
        let tokens = tokenize(query);
        self.score_tokens(&tokens, doc)
    }

    pub fn score_tokens(&self, query: &[String], doc: usize) -> Result<f64, SelectionError> {
        let tf = self.term_freqs.get(doc).ok_or(SelectionError::UnknownDocument(doc))?;
        let Bm25Params { k1, b } = self.params;
        let norm = 1.0 - b + b * self.doc_lens[doc] as f64 / self.avg_len.max(f64::MIN_POSITIVE);
        Ok(query
            .iter()
            .filter_map(|t| tf.get(t).map(|&f| (t, f as f64)))
            .map(|(t, f)| self.idf(t) * f * (k1 + 1.0) / (f + k1 * norm))
            .sum())
    }

    /// Scores of every document, in index order.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let tokens = tokenize(query);
        (0..self.len())
            .map(|d| self.score_tokens(&tokens, d).unwrap_or(0.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_query_scores_zero() {
        let idx = Bm25Index::new(&["the cat sat", "a dog ran"], Bm25Params::default()).unwrap();
        assert_eq!(idx.score("zebra", 0).unwrap(), 0.0);
    }

    #[test]
    fn self_match_positive_on_single_doc() {
        let idx = Bm25Index::new(&["only document here"], Bm25Params::default()).unwrap();
        assert!(idx.score("only document here", 0).unwrap() > 0.0);
    }

    #[test]
    fn unknown_document() {
        let idx = Bm25Index::new(&["x"], Bm25Params::default()).unwrap();
        assert_eq!(idx.score("x", 3), Err(SelectionError::UnknownDocument(3)));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Bm25Index::new(&["x"], Bm25Params { k1: 0.0, b: 0.5 }).is_err());
        assert!(Bm25Index::new(&["x"], Bm25Params { k1: 1.2, b: 1.5 }).is_err());
    }

    #[test]
    fn monotone_in_term_frequency() {
        // Same length documents so only tf differs.
        let idx = Bm25Index::new(&["apple pear kiwi", "apple apple kiwi", "plum fig lime"], Bm25Params::default())
            .unwrap();
        assert!(idx.score("apple", 1).unwrap() >= idx.score("apple", 0).unwrap());
    }
}
