//! Tokenization shared by BM25, TF-IDF and the synthetic oracle.

use std::collections::BTreeSet;

/// Lowercases and splits on runs of non-alphanumeric characters. No stemming,
/// no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Jaccard similarity of the two token sets. Two empty sets score 0.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a = token_set(a);
    let b = token_set(b);
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lowercases() {
        assert_eq!(tokenize("A gripping, film!  it's 2x"), vec!["a", "gripping", "film", "it", "s", "2x"]);
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn jaccard_bounds() {
        assert_eq!(jaccard("a b c", "c b a"), 1.0);
        assert_eq!(jaccard("a b", "c d"), 0.0);
        assert_eq!(jaccard("a b", "b c"), 1.0 / 3.0);
        assert_eq!(jaccard("", ""), 0.0);
    }
}
