//! Shared domain types: labels, examples, demonstration sets and score vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// Index of a label inside its [`LabelSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub usize);

impl LabelId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One dataset record.
///
/// `context` feeds the `<C>` placeholder (premise / passage for NLI tasks) and
/// `input` feeds `<X>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub input: String,
    pub label: LabelId,
}

impl LabeledExample {
    pub fn new(input: impl Into<String>, label: LabelId) -> Self {
        Self {
            context: None,
            input: input.into(),
            label,
        }
    }

    pub fn with_context(context: impl Into<String>, input: impl Into<String>, label: LabelId) -> Self {
        Self {
            context: Some(context.into()),
            input: input.into(),
            label,
        }
    }

    /// Text used for retrieval and similarity: the context (if any) followed by
    /// the input, never the label.
    pub fn retrieval_text(&self) -> String {
        match &self.context {
            Some(c) => format!("{c} {}", self.input),
            None => self.input.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: LabelId,
    pub name: String,
    pub verbalizer: String,
}

/// Ordered label set. The order here is the index order of every [`ScoreVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSpace {
    labels: Vec<Label>,
}

impl LabelSpace {
    /// Builds a space from `(name, verbalizer)` pairs; ids are assigned in order.
    pub fn new<N, V>(pairs: impl IntoIterator<Item = (N, V)>) -> Result<Self, DatasetError>
    where
        N: Into<String>,
        V: Into<String>,
    {
        let labels: Vec<Label> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (name, verbalizer))| Label {
                id: LabelId(i),
                name: name.into(),
                verbalizer: verbalizer.into(),
            })
            .collect();
        if labels.len() < 2 {
            return Err(DatasetError::DegenerateLabelSpace(labels.len()));
        }
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                if a.verbalizer == b.verbalizer {
                    return Err(DatasetError::DuplicateVerbalizer(a.verbalizer.clone()));
                }
                if a.name == b.name {
                    return Err(DatasetError::DuplicateLabelName(a.name.clone()));
                }
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.labels.iter().map(|l| l.id)
    }

    pub fn get(&self, id: LabelId) -> Option<&Label> {
        self.labels.get(id.0)
    }

    pub fn contains(&self, id: LabelId) -> bool {
        id.0 < self.labels.len()
    }

    pub fn by_name(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().find(|l| l.name == name).map(|l| l.id)
    }

    pub fn verbalizers(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.verbalizer.clone()).collect()
    }
}

impl<'de> Deserialize<'de> for LabelSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Entry {
            name: String,
            verbalizer: Option<String>,
        }
        let entries = Vec::<Entry>::deserialize(d)?;
        LabelSpace::new(entries.into_iter().map(|e| {
            let v = e.verbalizer.unwrap_or_else(|| e.name.clone());
            (e.name, v)
        }))
        .map_err(serde::de::Error::custom)
    }
}

/// Ordered in-context demonstrations. Order is significant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemonstrationSet {
    demos: Vec<LabeledExample>,
}

impl DemonstrationSet {
    pub fn new(demos: Vec<LabeledExample>) -> Self {
        Self { demos }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.demos.iter()
    }

    pub fn as_slice(&self) -> &[LabeledExample] {
        &self.demos
    }

    pub fn labels(&self) -> Vec<LabelId> {
        self.demos.iter().map(|d| d.label).collect()
    }

    pub fn into_inner(self) -> Vec<LabeledExample> {
        self.demos
    }
}

impl FromIterator<LabeledExample> for DemonstrationSet {
    fn from_iter<I: IntoIterator<Item = LabeledExample>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a DemonstrationSet {
    type Item = &'a LabeledExample;
    type IntoIter = std::slice::Iter<'a, LabeledExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.demos.iter()
    }
}

/// Per-label log-domain scores, aligned with [`LabelSpace`] order. Entries are
/// always finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self, DatasetError> {
        if scores.is_empty() {
            return Err(DatasetError::EmptyScores);
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(DatasetError::NonFiniteScore(i));
        }
        Ok(Self(scores))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, id: LabelId) -> Option<f64> {
        self.0.get(id.0).copied()
    }

    /// Highest-scoring label; ties go to the lowest index.
    pub fn argmax(&self) -> LabelId {
        let mut best = 0;
        for (i, &s) in self.0.iter().enumerate().skip(1) {
            if s > self.0[best] {
                best = i;
            }
        }
        LabelId(best)
    }

    /// Log-softmax over the entries, computed with the max-shift.
    pub fn log_softmax(&self) -> Vec<f64> {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + self.0.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        self.0.iter().map(|s| s - lse).collect()
    }

    pub fn softmax(&self) -> Vec<f64> {
        self.log_softmax().into_iter().map(f64::exp).collect()
    }
}

impl<'de> Deserialize<'de> for ScoreVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        ScoreVector::new(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Examples per label, indexed by label id.
    pub counts: Vec<usize>,
    /// Labels of the space that never occur in the examples.
    pub missing: Vec<LabelId>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Checks label ranges and non-empty inputs, and counts examples per label.
///
/// The returned report is ok only if every label of the space occurs at least once.
pub fn validate_dataset(
    examples: &[LabeledExample],
    space: &LabelSpace,
) -> Result<ValidationReport, DatasetError> {
    if examples.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut counts = vec![0usize; space.len()];
    for (pos, ex) in examples.iter().enumerate() {
        if !space.contains(ex.label) {
            return Err(DatasetError::UnknownLabelId {
                position: pos,
                label: ex.label,
            });
        }
        if ex.input.is_empty() {
            return Err(DatasetError::EmptyInput(pos));
        }
        counts[ex.label.0] += 1;
    }
    let missing = space.ids().filter(|id| counts[id.0] == 0).collect();
    Ok(ValidationReport { counts, missing })
}
