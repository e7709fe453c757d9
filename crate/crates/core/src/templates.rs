//! Prompt rendering for demonstrations and queries.
//!
//! A pattern holds the `<X>` placeholder (and optionally `<C>`) and ends at the
//! label slot. All whitespace before the slot is part of the pattern, so an
//! unlabeled rendering is always a strict prefix of a labeled one.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::TemplateError;
use crate::types::{DemonstrationSet, LabelId, LabelSpace, LabeledExample};

pub const INPUT_PLACEHOLDER: &str = "<X>";
pub const CONTEXT_PLACEHOLDER: &str = "<C>";
pub const DEFAULT_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Input,
    Context,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTemplate {
    name: String,
    pattern: String,
    separator: String,
    completions: Vec<String>,
    segments: Vec<Segment>,
    uses_context: bool,
}

impl TaskTemplate {
    /// `completions[i]` is appended at the label slot for label `i`.
    pub fn new(
        name: impl Into<String>,
        pattern: impl Into<String>,
        separator: impl Into<String>,
        completions: Vec<String>,
    ) -> Result<Self, TemplateError> {
        let pattern = pattern.into();
        let segments = parse_pattern(&pattern)?;
        let inputs = segments.iter().filter(|s| **s == Segment::Input).count();
        let contexts = segments.iter().filter(|s| **s == Segment::Context).count();
        if inputs != 1 {
            return Err(TemplateError::PlaceholderMismatch(format!(
                "pattern must contain <X> exactly once, found {inputs}"
            )));
        }
        if contexts > 1 {
            return Err(TemplateError::PlaceholderMismatch(format!(
                "pattern may contain <C> at most once, found {contexts}"
            )));
        }
        if completions.len() < 2 {
            return Err(TemplateError::MissingCompletion(format!(
                "need one completion per label, got {}",
                completions.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            pattern,
            separator: separator.into(),
            completions,
            segments,
            uses_context: contexts == 1,
        })
    }

    /// Uses each label's verbalizer as its completion.
    pub fn for_space(
        name: impl Into<String>,
        pattern: impl Into<String>,
        separator: impl Into<String>,
        space: &LabelSpace,
    ) -> Result<Self, TemplateError> {
        Self::new(name, pattern, separator, space.verbalizers())
    }

    /// Parses a template definition file:
    ///
    /// ```toml
    /// name = "sst2"
    /// pattern = "Review: \"<X>\" Sentiment: "
    /// separator = "\n"          # optional
    /// [completions]             # optional, defaults to the verbalizers
    /// positive = "positive"
    /// negative = "negative"
    /// ```
    pub fn from_toml(text: &str, space: &LabelSpace) -> Result<Self, TemplateError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            name: String,
            pattern: String,
            separator: Option<String>,
            #[serde(default)]
            completions: BTreeMap<String, String>,
        }
        let file: File = toml::from_str(text).map_err(|e| TemplateError::Parse(e.to_string()))?;
        for key in file.completions.keys() {
            if space.by_name(key).is_none() {
                return Err(TemplateError::Parse(format!("completion for unknown label {key:?}")));
            }
        }
        let completions = space
            .labels()
            .iter()
            .map(|l| {
                file.completions
                    .get(&l.name)
                    .cloned()
                    .unwrap_or_else(|| l.verbalizer.clone())
            })
            .collect();
        Self::new(
            file.name,
            file.pattern,
            file.separator.unwrap_or_else(|| DEFAULT_SEPARATOR.to_string()),
            completions,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    pub fn uses_context(&self) -> bool {
        self.uses_context
    }

    pub fn completions(&self) -> &[String] {
        &self.completions
    }

    pub fn completion(&self, label: LabelId) -> Result<&str, TemplateError> {
        self.completions
            .get(label.0)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::MissingCompletion(label.to_string()))
    }

    /// Checks that the template defines a completion for every label of `space`.
    pub fn check_space(&self, space: &LabelSpace) -> Result<(), TemplateError> {
        if self.completions.len() != space.len() {
            return Err(TemplateError::MissingCompletion(format!(
                "template {:?} has {} completions, label space has {} labels",
                self.name,
                self.completions.len(),
                space.len()
            )));
        }
        Ok(())
    }

    pub fn with_separator(mut self, separator: impl Into<String>) -> Self {
        self.separator = separator.into();
        self
    }
}

fn parse_pattern(pattern: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut segments = Vec::new();
    let mut rest = pattern;
    loop {
        let next = [(INPUT_PLACEHOLDER, Segment::Input), (CONTEXT_PLACEHOLDER, Segment::Context)]
            .into_iter()
            .filter_map(|(p, seg)| rest.find(p).map(|i| (i, p.len(), seg)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, len, seg)) => {
                if i > 0 {
                    segments.push(Segment::Literal(rest[..i].to_string()));
                }
                segments.push(seg);
                rest = &rest[i + len..];
            }
            None => {
                if !rest.is_empty() {
                    segments.push(Segment::Literal(rest.to_string()));
                }
                break;
            }
        }
    }
    if segments.is_empty() {
        return Err(TemplateError::PlaceholderMismatch("empty pattern".into()));
    }
    Ok(segments)
}

/// Renders one example. With `with_label` the label's completion is appended at
/// the slot; otherwise the text ends exactly at the slot.
pub fn render_example(
    template: &TaskTemplate,
    example: &LabeledExample,
    with_label: bool,
) -> Result<String, TemplateError> {
    match (&example.context, template.uses_context) {
        (None, true) => return Err(TemplateError::MissingContextField),
        (Some(_), false) => {
            return Err(TemplateError::PlaceholderMismatch(format!(
                "example has a context but template {:?} has no <C>",
                template.name
            )))
        }
        _ => {}
    }
    let mut out = String::with_capacity(template.pattern.len() + example.input.len() + 16);
    for seg in &template.segments {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Input => out.push_str(&example.input),
            Segment::Context => out.push_str(example.context.as_deref().unwrap_or_default()),
        }
    }
    if with_label {
        out.push_str(template.completion(example.label)?);
    }
    Ok(out)
}

/// Labeled demonstrations in order, each followed by the separator, then the
/// unlabeled query. With no demonstrations this is just the query rendering.
pub fn render_prompt(
    template: &TaskTemplate,
    demos: &DemonstrationSet,
    query: &LabeledExample,
) -> Result<String, TemplateError> {
    let mut out = String::new();
    for demo in demos {
        out.push_str(&render_example(template, demo, true)?);
        out.push_str(&template.separator);
    }
    out.push_str(&render_example(template, query, false)?);
    Ok(out)
}

/// A template together with the label space it renders.
#[derive(Debug, Clone)]
pub struct Task {
    pub template: TaskTemplate,
    pub space: LabelSpace,
}

impl Task {
    pub fn new(template: TaskTemplate, space: LabelSpace) -> Result<Self, TemplateError> {
        template.check_space(&space)?;
        Ok(Self { template, space })
    }
}

pub const BUILTIN_NAMES: &[&str] = &["sst2", "sst5", "subj", "cr", "agnews", "mnli", "qnli"];

/// Looks up a built-in task by name (case-insensitive, `-`/`_` ignored).
pub fn builtin(name: &str) -> Result<Task, TemplateError> {
    let key: String = name
        .chars()
        .filter(|c| *c != '-' && *c != '_')
        .flat_map(char::to_lowercase)
        .collect();
    let (pattern, labels): (&str, &[(&str, &str)]) = match key.as_str() {
        "sst2" => (
            "Review: \"<X>\" Sentiment: ",
            &[("positive", "positive"), ("negative", "negative")],
        ),
        "sst5" => (
            "Review: \"<X>\" Sentiment: ",
            &[
                ("terrible", "terrible"),
                ("bad", "bad"),
                ("okay", "okay"),
                ("good", "good"),
                ("great", "great"),
            ],
        ),
        "subj" => (
            "Input: \"<X>\" Type: ",
            &[("objective", "objective"), ("subjective", "subjective")],
        ),
        "cr" => (
            "Review: \"<X>\" Sentiment: ",
            &[("positive", "positive"), ("negative", "negative")],
        ),
        "agnews" => (
            "Input: \"<X>\" Type: ",
            &[
                ("World", "world"),
                ("Sports", "sports"),
                ("Business", "business"),
                ("Sci/Tech", "technology"),
            ],
        ),
        "mnli" => (
            "Premise: <C> Hypothesis: <X> Prediction: ",
            &[
                ("Entailment", "entailment"),
                ("Neutral", "neutral"),
                ("Contradiction", "contradiction"),
            ],
        ),
        "qnli" => (
            "<C> Can we know <X>? ",
            &[("Entailment", "Yes."), ("Contradiction", "No.")],
        ),
        _ => return Err(TemplateError::UnknownTemplate(name.to_string())),
    };
    let space = LabelSpace::new(labels.iter().copied())
        .map_err(|e| TemplateError::Parse(e.to_string()))?;
    let template = TaskTemplate::for_space(key, pattern, DEFAULT_SEPARATOR, &space)?;
    Ok(Task { template, space })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sst2() -> Task {
        builtin("SST-2").unwrap()
    }

    #[test]
    fn sst2_labeled_rendering() {
        let t = sst2();
        let ex = LabeledExample::new("a gripping film", t.space.by_name("positive").unwrap());
        assert_eq!(
            render_example(&t.template, &ex, true).unwrap(),
            "Review: \"a gripping film\" Sentiment: positive"
        );
    }

    #[test]
    fn qnli_context_rendering() {
        let t = builtin("qnli").unwrap();
        let ex = LabeledExample::with_context(
            "The sky is blue.",
            "the sky has a color",
            t.space.by_name("Entailment").unwrap(),
        );
        assert_eq!(
            render_example(&t.template, &ex, true).unwrap(),
            "The sky is blue. Can we know the sky has a color? Yes."
        );
    }

    #[test]
    fn unlabeled_is_strict_prefix() {
        for name in BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            for id in t.space.ids() {
                let ex = if t.template.uses_context() {
                    LabeledExample::with_context("ctx", "inp", id)
                } else {
                    LabeledExample::new("inp", id)
                };
                let bare = render_example(&t.template, &ex, false).unwrap();
                let full = render_example(&t.template, &ex, true).unwrap();
                assert!(full.starts_with(&bare) && full.len() > bare.len(), "{name}");
            }
        }
    }

    #[test]
    fn context_mismatch_errors() {
        let t = builtin("mnli").unwrap();
        let ex = LabeledExample::new("x", LabelId(0));
        assert_eq!(render_example(&t.template, &ex, false), Err(TemplateError::MissingContextField));
        let s = sst2();
        let ex = LabeledExample::with_context("c", "x", LabelId(0));
        assert!(matches!(
            render_example(&s.template, &ex, false),
            Err(TemplateError::PlaceholderMismatch(_))
        ));
    }

    #[test]
    fn placeholder_text_inside_input_is_not_substituted() {
        let t = builtin("mnli").unwrap();
        let ex = LabeledExample::with_context("see <X>", "<C> here", LabelId(0));
        assert_eq!(
            render_example(&t.template, &ex, false).unwrap(),
            "Premise: see <X> Hypothesis: <C> here Prediction: "
        );
    }

    #[test]
    fn pattern_validation() {
        let c = vec!["a".to_string(), "b".to_string()];
        assert!(TaskTemplate::new("t", "no slot", "\n", c.clone()).is_err());
        assert!(TaskTemplate::new("t", "<X> <X>", "\n", c.clone()).is_err());
        assert!(TaskTemplate::new("t", "<C> <C> <X>", "\n", c.clone()).is_err());
        assert!(TaskTemplate::new("t", "<X>: ", "\n", c).is_ok());
    }

    #[test]
    fn prompt_concatenation() {
        let t = sst2();
        let d1 = LabeledExample::new("one", LabelId(0));
        let d2 = LabeledExample::new("two", LabelId(1));
        let q = LabeledExample::new("three", LabelId(0));
        let demos = DemonstrationSet::new(vec![d1.clone(), d2.clone()]);
        let expected = format!(
            "{}\n{}\n{}",
            render_example(&t.template, &d1, true).unwrap(),
            render_example(&t.template, &d2, true).unwrap(),
            render_example(&t.template, &q, false).unwrap()
        );
        assert_eq!(render_prompt(&t.template, &demos, &q).unwrap(), expected);
        assert_eq!(
            render_prompt(&t.template, &DemonstrationSet::empty(), &q).unwrap(),
            render_example(&t.template, &q, false).unwrap()
        );
    }

    #[test]
    fn sixteen_shot_prompt_has_sixteen_reviews() {
        let t = sst2();
        let demos: DemonstrationSet = (0..16)
            .map(|i| LabeledExample::new(format!("review number {i}"), LabelId(i % 2)))
            .collect();
        let q = LabeledExample::new("the query", LabelId(0));
        let prompt = render_prompt(&t.template, &demos, &q).unwrap();
        let query_line = render_example(&t.template, &q, false).unwrap();
        let before_query = &prompt[..prompt.len() - query_line.len()];
        assert_eq!(before_query.matches("Review: \"").count(), 16);
        assert_eq!(prompt.matches("Review: \"").count(), 17);
        // Positional order
        let positions: Vec<usize> = (0..16)
            .map(|i| prompt.find(&format!("review number {i}\"")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn template_file_round() {
        let space = LabelSpace::new([("pos", "good"), ("neg", "bad")]).unwrap();
        let t = TaskTemplate::from_toml(
            "name = \"custom\"\npattern = \"Q: <X> A: \"\nseparator = \"\\n\\n\"\n[completions]\nneg = \"awful\"\n",
            &space,
        )
        .unwrap();
        assert_eq!(t.completions(), &["good".to_string(), "awful".to_string()]);
        assert_eq!(t.separator(), "\n\n");
        assert!(TaskTemplate::from_toml("name = \"x\"\npattern = \"<X>\"\n[completions]\nzzz = \"q\"\n", &space).is_err());
    }
}
