//! Demonstration selection: random, BM25 and embedding nearest neighbours.

mod bm25;
mod embedding;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bm25::{Bm25Index, Bm25Params};
pub use embedding::{cosine, EmbeddingProvider, TfIdfProvider};

use crate::error::SelectionError;
use crate::rng::SeededRng;
use crate::types::{DemonstrationSet, LabeledExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Random,
    Bm25,
    TopK,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Bm25 => "bm25",
            Self::TopK => "topk",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "bm25" => Ok(Self::Bm25),
            "topk" | "top-k" | "knn" => Ok(Self::TopK),
            other => Err(format!("unknown selection method {other:?} (expected random, bm25 or topk)")),
        }
    }
}

/// Order of retrieved demonstrations in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoOrder {
    /// Least similar first, most similar right before the query.
    #[default]
    Ascending,
    Descending,
}

/// Uniform sample of `k` distinct pool items without replacement, in draw
/// order (partial Fisher-Yates).
pub fn select_random(
    pool: &[LabeledExample],
    k: usize,
    rng: &mut SeededRng,
) -> Result<DemonstrationSet, SelectionError> {
    Ok(random_indices(pool.len(), k, rng)?
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

pub fn random_indices(n: usize, k: usize, rng: &mut SeededRng) -> Result<Vec<usize>, SelectionError> {
    if k > n {
        return Err(SelectionError::PoolTooSmall { k, pool: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    Ok(idx)
}

/// Indices of the `k` highest scores, ties broken by ascending index, arranged
/// per `order`. `Ascending` is the reverse of the ranking.
pub fn top_k_indices(scores: &[f64], k: usize, order: DemoOrder) -> Result<Vec<usize>, SelectionError> {
    if k > scores.len() {
        return Err(SelectionError::PoolTooSmall { k, pool: scores.len() });
    }
    let mut ranked: Vec<usize> = (0..scores.len()).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranked.truncate(k);
    if order == DemoOrder::Ascending {
        ranked.reverse();
    }
    Ok(ranked)
}

/// Selects by BM25 similarity to the query's retrieval text (context plus input).
pub fn select_bm25(
    pool: &[LabeledExample],
    query: &LabeledExample,
    k: usize,
    params: Bm25Params,
    order: DemoOrder,
) -> Result<DemonstrationSet, SelectionError> {
    Bm25Selector::new(pool, params)?.select(pool, query, k, order)
}

/// Selects by cosine similarity of provider embeddings.
pub fn select_topk(
    pool: &[LabeledExample],
    query: &LabeledExample,
    k: usize,
    provider: &dyn EmbeddingProvider,
    order: DemoOrder,
) -> Result<DemonstrationSet, SelectionError> {
    TopKSelector::new(pool, provider)?.select(pool, query, k, provider, order)
}

/// BM25 index over a pool, reusable across queries.
#[derive(Debug, Clone)]
pub struct Bm25Selector {
    index: Bm25Index,
}

impl Bm25Selector {
    pub fn new(pool: &[LabeledExample], params: Bm25Params) -> Result<Self, SelectionError> {
        let docs: Vec<String> = pool.iter().map(LabeledExample::retrieval_text).collect();
        Ok(Self {
            index: Bm25Index::new(&docs, params)?,
        })
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }

    pub fn select(
        &self,
        pool: &[LabeledExample],
        query: &LabeledExample,
        k: usize,
        order: DemoOrder,
    ) -> Result<DemonstrationSet, SelectionError> {
        let scores = self.index.score_all(&query.retrieval_text());
        Ok(top_k_indices(&scores, k, order)?
            .into_iter()
            .map(|i| pool[i].clone())
            .collect())
    }
}

/// Precomputed pool embeddings for nearest-neighbour selection.
#[derive(Debug, Clone)]
pub struct TopKSelector {
    vectors: Vec<Vec<f64>>,
}

impl TopKSelector {
    pub fn new(pool: &[LabeledExample], provider: &dyn EmbeddingProvider) -> Result<Self, SelectionError> {
        let texts: Vec<String> = pool.iter().map(LabeledExample::retrieval_text).collect();
        Ok(Self {
            vectors: provider.embed_batch(&texts)?,
        })
    }

    pub fn similarities(&self, query: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|v| cosine(query, v)).collect()
    }

    pub fn select(
        &self,
        pool: &[LabeledExample],
        query: &LabeledExample,
        k: usize,
        provider: &dyn EmbeddingProvider,
        order: DemoOrder,
    ) -> Result<DemonstrationSet, SelectionError> {
        let q = provider.embed(&query.retrieval_text())?;
        let scores = self.similarities(&q);
        Ok(top_k_indices(&scores, k, order)?
            .into_iter()
            .map(|i| pool[i].clone())
            .collect())
    }
}

/// A selection method with any per-pool state built once.
pub enum Selector {
    Random,
    Bm25 { selector: Bm25Selector, order: DemoOrder },
    TopK {
        selector: TopKSelector,
        provider: Arc<dyn EmbeddingProvider>,
        order: DemoOrder,
    },
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random => f.write_str("Selector::Random"),
            Self::Bm25 { order, .. } => write!(f, "Selector::Bm25({order:?})"),
            Self::TopK { order, .. } => write!(f, "Selector::TopK({order:?})"),
        }
    }
}

impl Selector {
    pub fn random() -> Self {
        Self::Random
    }

    pub fn bm25(pool: &[LabeledExample], params: Bm25Params, order: DemoOrder) -> Result<Self, SelectionError> {
        Ok(Self::Bm25 {
            selector: Bm25Selector::new(pool, params)?,
            order,
        })
    }

    pub fn topk(
        pool: &[LabeledExample],
        provider: Arc<dyn EmbeddingProvider>,
        order: DemoOrder,
    ) -> Result<Self, SelectionError> {
        Ok(Self::TopK {
            selector: TopKSelector::new(pool, provider.as_ref())?,
            provider,
            order,
        })
    }

    /// Only the random method draws from `rng`.
    pub fn select(
        &self,
        pool: &[LabeledExample],
        query: &LabeledExample,
        k: usize,
        rng: &mut SeededRng,
    ) -> Result<DemonstrationSet, SelectionError> {
        match self {
            Self::Random => select_random(pool, k, rng),
            Self::Bm25 { selector, order } => selector.select(pool, query, k, *order),
            Self::TopK {
                selector,
                provider,
                order,
            } => selector.select(pool, query, k, provider.as_ref(), *order),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelId;

    fn pool(texts: &[&str]) -> Vec<LabeledExample> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| LabeledExample::new(*t, LabelId(i % 2)))
            .collect()
    }

    #[test]
    fn random_full_draw_is_permutation() {
        let p = pool(&["a", "b", "c", "d", "e"]);
        let s = select_random(&p, 5, &mut SeededRng::new(1)).unwrap();
        let mut inputs: Vec<_> = s.iter().map(|e| e.input.clone()).collect();
        inputs.sort();
        assert_eq!(inputs, vec!["a", "b", "c", "d", "e"]);
        assert!(select_random(&p, 0, &mut SeededRng::new(1)).unwrap().is_empty());
        assert_eq!(
            select_random(&p, 6, &mut SeededRng::new(1)),
            Err(SelectionError::PoolTooSmall { k: 6, pool: 5 })
        );
    }

    #[test]
    fn random_is_reproducible() {
        let texts: Vec<String> = (0..100).map(|i| format!("doc {i}")).collect();
        let p: Vec<_> = texts.iter().map(|t| LabeledExample::new(t.as_str(), LabelId(0))).collect();
        let a = select_random(&p, 16, &mut SeededRng::new(42)).unwrap();
        let b = select_random(&p, 16, &mut SeededRng::new(42)).unwrap();
        let c = select_random(&p, 16, &mut SeededRng::new(43)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bm25_k1_is_argmax() {
        let p = pool(&["red apple", "green pear", "red red apple pie", "blue sky"]);
        let q = LabeledExample::new("red apple", LabelId(0));
        let s = select_bm25(&p, &q, 1, Bm25Params::default(), DemoOrder::Ascending).unwrap();
        let scores = Bm25Selector::new(&p, Bm25Params::default()).unwrap().index().score_all("red apple");
        let best = (0..4).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
        assert_eq!(s.as_slice()[0], p[best]);
    }

    #[test]
    fn bm25_all_zero_falls_back_to_index_order() {
        let p = pool(&["a", "b", "c", "d"]);
        let q = LabeledExample::new("zzz", LabelId(0));
        let s = select_bm25(&p, &q, 3, Bm25Params::default(), DemoOrder::Descending).unwrap();
        assert_eq!(s.as_slice(), &p[..3]);
        let s = select_bm25(&p, &q, 3, Bm25Params::default(), DemoOrder::Ascending).unwrap();
        let expected: Vec<_> = p[..3].iter().rev().cloned().collect();
        assert_eq!(s.as_slice(), expected.as_slice());
    }

    #[test]
    fn topk_exact_match_ranks_first() {
        let p = pool(&["cats purr softly", "dogs bark loud", "birds sing"]);
        let provider = TfIdfProvider::fit(&p.iter().map(|e| e.input.clone()).collect::<Vec<_>>());
        let q = LabeledExample::new("dogs bark loud", LabelId(0));
        let s = select_topk(&p, &q, 2, &provider, DemoOrder::Descending).unwrap();
        assert_eq!(s.as_slice()[0], p[1]);
    }

    #[test]
    fn topk_orthogonal_ties_by_index() {
        let p = pool(&["a", "b", "c"]);
        let provider = TfIdfProvider::fit(&["a", "b", "c"]);
        let q = LabeledExample::new("zzz", LabelId(0));
        let s = select_topk(&p, &q, 2, &provider, DemoOrder::Descending).unwrap();
        assert_eq!(s.as_slice(), &p[..2]);
    }

    #[test]
    fn top_k_indices_ordering() {
        let scores = [0.1, 0.9, 0.5, 0.9];
        assert_eq!(top_k_indices(&scores, 3, DemoOrder::Descending).unwrap(), vec![1, 3, 2]);
        assert_eq!(top_k_indices(&scores, 3, DemoOrder::Ascending).unwrap(), vec![2, 3, 1]);
    }
}
