//! Negative demonstration sets with a deliberately broken input-label mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::NegativeError;
use crate::rng::SeededRng;
use crate::types::{DemonstrationSet, LabelId, LabeledExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeVariant {
    /// Keep each label, replace the input with one from a different class.
    #[serde(rename = "input", alias = "inputswap", alias = "input_swap")]
    InputSwap,
    /// Keep each input, replace the label with a different one.
    #[serde(rename = "label", alias = "labelswap", alias = "label_swap")]
    LabelSwap,
    /// No demonstrations at all.
    Null,
}

impl NegativeVariant {
    pub const ALL: [NegativeVariant; 3] = [Self::InputSwap, Self::LabelSwap, Self::Null];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::InputSwap => "input",
            Self::LabelSwap => "label",
            Self::Null => "null",
        }
    }
}

impl fmt::Display for NegativeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NegativeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "input" | "inputswap" => Ok(Self::InputSwap),
            "label" | "labelswap" => Ok(Self::LabelSwap),
            "null" | "none" => Ok(Self::Null),
            other => Err(format!("unknown negative variant {other:?} (expected input, label or null)")),
        }
    }
}

/// Pool examples grouped by label, for two-stage swap-source sampling.
#[derive(Debug, Clone)]
pub struct LabelBuckets<'a> {
    buckets: Vec<Vec<&'a LabeledExample>>,
}

impl<'a> LabelBuckets<'a> {
    /// Groups `pool` by label. Examples equal to `exclude` (the query being
    /// classified) are left out. Labels outside `0..num_labels` are ignored.
    pub fn new(pool: &'a [LabeledExample], num_labels: usize, exclude: Option<&LabeledExample>) -> Self {
        let mut buckets = vec![Vec::new(); num_labels];
        for ex in pool {
            if exclude.is_some_and(|q| q == ex) {
                continue;
            }
            if let Some(b) = buckets.get_mut(ex.label.0) {
                b.push(ex);
            }
        }
        Self { buckets }
    }

    pub fn num_labels(&self) -> usize {
        self.buckets.len()
    }

    pub fn count(&self, label: LabelId) -> usize {
        self.buckets.get(label.0).map_or(0, Vec::len)
    }
}

/// Replaces each demonstration's input (and context) with one drawn from a
/// different class, keeping the label sequence.
///
/// For position `i` with label `y_i`, a counter label `y_j != y_i` is drawn
/// uniformly from the label space, then a source example uniformly among pool
/// examples labeled `y_j`. Sources are drawn with replacement.
pub fn build_input_swap(
    demos: &DemonstrationSet,
    pool: &LabelBuckets<'_>,
    rng: &mut SeededRng,
) -> Result<DemonstrationSet, NegativeError> {
    let n = pool.num_labels();
    if n < 2 {
        return Err(NegativeError::DegenerateLabelSpace(n));
    }
    // Every counter label of every demo label must have a source available.
    let mut seen = vec![false; n];
    for d in demos {
        if let Some(s) = seen.get_mut(d.label.0) {
            *s = true;
        }
    }
    for (label, present) in seen.iter().enumerate() {
        if !present {
            continue;
        }
        if let Some(empty) = (0..n).find(|&l| l != label && pool.buckets[l].is_empty()) {
            return Err(NegativeError::NoCounterLabelExample(LabelId(empty)));
        }
    }

    demos
        .iter()
        .map(|d| {
            let y = d.label.0;
            if y >= n {
                return Err(NegativeError::NoCounterLabelExample(d.label));
            }
            let source_label = rng.below_except(n, y);
            let bucket = &pool.buckets[source_label];
            let source = bucket[rng.below(bucket.len())];
            Ok(LabeledExample {
                context: source.context.clone(),
                input: source.input.clone(),
                label: d.label,
            })
        })
        .collect()
}

/// Replaces each label with a uniform draw from the other labels, keeping inputs.
pub fn build_label_swap(
    demos: &DemonstrationSet,
    num_labels: usize,
    rng: &mut SeededRng,
) -> Result<DemonstrationSet, NegativeError> {
    if num_labels < 2 {
        return Err(NegativeError::DegenerateLabelSpace(num_labels));
    }
    Ok(demos
        .iter()
        .map(|d| LabeledExample {
            context: d.context.clone(),
            input: d.input.clone(),
            label: LabelId(rng.below_except(num_labels, d.label.0)),
        })
        .collect())
}

pub fn build_null(_demos: &DemonstrationSet) -> DemonstrationSet {
    DemonstrationSet::empty()
}

/// Builds the negative set for `variant`.
pub fn build_negative(
    variant: NegativeVariant,
    demos: &DemonstrationSet,
    pool: &LabelBuckets<'_>,
    rng: &mut SeededRng,
) -> Result<DemonstrationSet, NegativeError> {
    match variant {
        NegativeVariant::InputSwap => build_input_swap(demos, pool, rng),
        NegativeVariant::LabelSwap => build_label_swap(demos, pool.num_labels(), rng),
        NegativeVariant::Null => Ok(build_null(demos)),
    }
}
