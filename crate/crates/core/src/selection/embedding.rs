use std::collections::HashMap;

use crate::error::SelectionError;
use crate::text::tokenize;

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic for a given text.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SelectionError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SelectionError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// L2-normalized TF-IDF over a fixed vocabulary.
///
/// Weights are raw term count times smoothed idf `ln((1 + N) / (1 + df)) + 1`.
/// Terms outside the fitted vocabulary are dropped.
#[derive(Debug, Clone)]
pub struct TfIdfProvider {
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfProvider {
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut vocab: HashMap<String, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        for doc in docs {
            let mut seen: Vec<usize> = tokenize(doc.as_ref())
                .into_iter()
                .map(|t| {
                    let next = vocab.len();
                    let id = *vocab.entry(t).or_insert(next);
                    if id == df.len() {
                        df.push(0);
                    }
                    id
                })
                .collect();
            seen.sort_unstable();
            seen.dedup();
            for id in seen {
                df[id] += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        Self { vocab, idf }
    }

    pub fn dimension(&self) -> usize {
        self.idf.len()
    }
}

impl EmbeddingProvider for TfIdfProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SelectionError> {
        let mut v = vec![0.0; self.idf.len()];
        for t in tokenize(text) {
            if let Some(&id) = self.vocab.get(&t) {
                v[id] += self.idf[id];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}
