//! Dataset manifests and line-delimited JSON splits.
//!
//! A manifest is a TOML file:
//!
//! ```toml
//! task = "sst2"
//! template = "sst2"            # a built-in name; or template_file = "tpl.toml"
//!
//! [[labels]]                   # optional for built-in templates
//! name = "positive"
//! verbalizer = "positive"
//!
//! [splits]
//! pool = "train.jsonl"         # relative to the manifest
//! test = "test.jsonl"
//!
//! [fields]
//! input = "sentence"
//! context = "premise"          # only for templates with <C>
//! label = "label"
//!
//! [declared_sizes]             # optional
//! pool = 6920
//! test = 1821
//! ```
//!
//! Each split line is a flat JSON object. Mapped fields must be strings;
//! numbers are accepted for the label field and matched by their decimal text.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::IngestError;
use crate::templates::{builtin, Task, TaskTemplate};
use crate::types::{validate_dataset, LabelSpace, LabeledExample, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Pool,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Pool => "pool",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMapping {
    #[serde(default = "default_input")]
    pub input: String,
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_input() -> String {
    "text".into()
}
fn default_label() -> String {
    "label".into()
}

impl Default for FieldMapping {
    fn default() -> Self {
        Self {
            input: default_input(),
            context: None,
            label: default_label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPaths {
    pub pool: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredSizes {
    pub pool: Option<usize>,
    pub test: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    task: String,
    #[serde(default)]
    template: Option<String>,
    #[serde(default)]
    template_file: Option<PathBuf>,
    #[serde(default)]
    separator: Option<String>,
    #[serde(default)]
    labels: Option<Vec<LabelEntry>>,
    splits: SplitPaths,
    #[serde(default)]
    fields: FieldMapping,
    #[serde(default)]
    declared_sizes: DeclaredSizes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LabelEntry {
    name: String,
    #[serde(default)]
    verbalizer: Option<String>,
}

/// A resolved manifest: label space and template bound, paths absolute.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub task_name: String,
    pub task: Task,
    pub splits: SplitPaths,
    pub fields: FieldMapping,
    pub declared_sizes: DeclaredSizes,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses manifest text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, IngestError> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        let builtin_task = match &file.template {
            Some(name) => Some(builtin(name)?),
            None => None,
        };
        let space = match (&file.labels, &builtin_task) {
            (Some(entries), _) => LabelSpace::new(entries.iter().map(|e| {
                (e.name.clone(), e.verbalizer.clone().unwrap_or_else(|| e.name.clone()))
            }))
            .map_err(|e| IngestError::Manifest(e.to_string()))?,
            (None, Some(b)) => b.space.clone(),
            (None, None) => return Err(IngestError::Manifest("labels are required without a built-in template".into())),
        };
        let template = match (&file.template_file, builtin_task) {
            (Some(_), Some(_)) => {
                return Err(IngestError::Manifest("give either template or template_file, not both".into()))
            }
            (Some(tf), None) => {
                let p = base.join(tf);
                let text = fs::read_to_string(&p).map_err(|source| IngestError::Io { path: p.clone(), source })?;
                TaskTemplate::from_toml(&text, &space)?
            }
            (None, Some(b)) => {
                if file.labels.is_some() {
                    // Built-in pattern, completions from the manifest's verbalizers.
                    TaskTemplate::for_space(b.template.name(), b.template.pattern(), b.template.separator(), &space)?
                } else {
                    b.template
                }
            }
            (None, None) => return Err(IngestError::Manifest("template or template_file is required".into())),
        };
        let template = match file.separator {
            Some(sep) => template.with_separator(sep),
            None => template,
        };
        if template.uses_context() != file.fields.context.is_some() {
            return Err(IngestError::Manifest(format!(
                "template {:?} {} <C> but fields.context is {}",
                template.name(),
                if template.uses_context() { "uses" } else { "does not use" },
                if file.fields.context.is_some() { "set" } else { "unset" }
            )));
        }
        let task = Task::new(template, space)?;
        Ok(Self {
            task_name: file.task,
            task,
            splits: SplitPaths {
                pool: base.join(file.splits.pool),
                test: base.join(file.splits.test),
            },
            fields: file.fields,
            declared_sizes: file.declared_sizes,
        })
    }

    pub fn path(&self, split: Split) -> &Path {
        match split {
            Split::Pool => &self.splits.pool,
            Split::Test => &self.splits.test,
        }
    }

    fn declared(&self, split: Split) -> Option<usize> {
        match split {
            Split::Pool => self.declared_sizes.pool,
            Split::Test => self.declared_sizes.test,
        }
    }
}

fn field_text(obj: &serde_json::Map<String, Value>, key: &str, allow_number: bool) -> Option<Result<String, String>> {
    obj.get(key).map(|v| match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) if allow_number => Ok(n.to_string()),
        other => Err(format!("field {key:?} must be a string, got {other}")),
    })
}

/// Parses split text (one JSON object per line; blank lines skipped).
pub fn parse_split(text: &str, manifest: &DatasetManifest, path: &Path) -> Result<Vec<LabeledExample>, IngestError> {
    let space = &manifest.task.space;
    let fields = &manifest.fields;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| IngestError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let missing = |field: &str| IngestError::MissingField {
            path: path.to_path_buf(),
            line: line_no,
            field: field.to_string(),
        };
        let value: Value = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("record is not a JSON object".into()))?;
        let input = field_text(obj, &fields.input, false)
            .ok_or_else(|| missing(&fields.input))?
            .map_err(parse_err)?;
        if input.is_empty() {
            return Err(parse_err(format!("field {:?} is empty", fields.input)));
        }
        let context = match &fields.context {
            Some(key) => Some(field_text(obj, key, false).ok_or_else(|| missing(key))?.map_err(parse_err)?),
            None => None,
        };
        let label_name = field_text(obj, &fields.label, true)
            .ok_or_else(|| missing(&fields.label))?
            .map_err(parse_err)?;
        let label = space.by_name(&label_name).ok_or_else(|| IngestError::UnknownLabelName {
            path: path.to_path_buf(),
            line: line_no,
            name: label_name.clone(),
        })?;
        out.push(LabeledExample { context, input, label });
    }
    Ok(out)
}

/// Loads one split in file order, checks declared sizes, and validates labels.
pub fn load_split(manifest: &DatasetManifest, split: Split) -> Result<(Vec<LabeledExample>, ValidationReport), IngestError> {
    let path = manifest.path(split);
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let examples = parse_split(&text, manifest, path)?;
    if let Some(declared) = manifest.declared(split) {
        if declared != examples.len() {
            return Err(IngestError::SizeMismatch {
                split: split.to_string(),
                declared,
                actual: examples.len(),
            });
        }
    }
    let report = validate_dataset(&examples, &manifest.task.space).map_err(|source| IngestError::Dataset {
        split: split.to_string(),
        source,
    })?;
    Ok((examples, report))
}

/// A loaded dataset: the demonstration pool and the test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub pool: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub pool_report: ValidationReport,
}

impl Dataset {
    /// Loads both splits. The pool must contain every label.
    pub fn load(manifest: &DatasetManifest) -> Result<Self, IngestError> {
        let (pool, pool_report) = load_split(manifest, Split::Pool)?;
        if !pool_report.is_ok() {
            let names = pool_report
                .missing
                .iter()
                .filter_map(|id| manifest.task.space.get(*id).map(|l| l.name.clone()))
                .collect();
            return Err(IngestError::IncompletePool(names));
        }
        let (test, _) = load_split(manifest, Split::Test)?;
        Ok(Self {
            name: manifest.task_name.clone(),
            task: manifest.task.clone(),
            pool,
            test,
            pool_report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelId;

    fn sst2_manifest(dir: &Path, extra: &str) -> DatasetManifest {
        DatasetManifest::parse(
            &format!("task = \"sst2\"\ntemplate = \"sst2\"\n[splits]\npool = \"pool.jsonl\"\ntest = \"test.jsonl\"\n{extra}"),
            dir,
        )
        .unwrap()
    }

    #[test]
    fn maps_record_to_example() {
        let m = sst2_manifest(Path::new("/tmp"), "");
        let ex = parse_split("{\"text\":\"great film\",\"label\":\"positive\"}\n", &m, Path::new("x")).unwrap();
        assert_eq!(ex, vec![LabeledExample::new("great film", m.task.space.by_name("positive").unwrap())]);
    }

    #[test]
    fn missing_label_field() {
        let m = sst2_manifest(Path::new("/tmp"), "");
        let err = parse_split("{\"text\":\"a\"}\n{\"text\":\"b\"}", &m, Path::new("x")).unwrap_err();
        assert!(matches!(err, IngestError::MissingField { line: 1, ref field, .. } if field == "label"));
    }

    #[test]
    fn unknown_label_name_and_bad_json() {
        let m = sst2_manifest(Path::new("/tmp"), "");
        let err = parse_split("{\"text\":\"a\",\"label\":\"meh\"}", &m, Path::new("x")).unwrap_err();
        assert!(matches!(err, IngestError::UnknownLabelName { line: 1, .. }));
        let err = parse_split("\n{oops", &m, Path::new("x")).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 2, .. }));
    }

    #[test]
    fn numeric_labels_match_by_name() {
        let m = DatasetManifest::parse(
            "task = \"t\"\ntemplate = \"sst2\"\n[[labels]]\nname = \"0\"\nverbalizer = \"negative\"\n[[labels]]\nname = \"1\"\nverbalizer = \"positive\"\n[splits]\npool = \"p\"\ntest = \"t\"\n",
            Path::new("/tmp"),
        )
        .unwrap();
        let ex = parse_split("{\"text\":\"a\",\"label\":1}", &m, Path::new("x")).unwrap();
        assert_eq!(ex[0].label, LabelId(1));
        assert_eq!(m.task.template.completions(), &["negative".to_string(), "positive".to_string()]);
    }

    #[test]
    fn context_mapping_must_match_template() {
        let err = DatasetManifest::parse(
            "task = \"m\"\ntemplate = \"mnli\"\n[splits]\npool = \"p\"\ntest = \"t\"\n",
            Path::new("/tmp"),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Manifest(_)));
        let m = DatasetManifest::parse(
            "task = \"m\"\ntemplate = \"mnli\"\n[splits]\npool = \"p\"\ntest = \"t\"\n[fields]\ninput = \"hypothesis\"\ncontext = \"premise\"\n",
            Path::new("/tmp"),
        )
        .unwrap();
        let ex = parse_split(
            "{\"premise\":\"P\",\"hypothesis\":\"H\",\"label\":\"Neutral\"}",
            &m,
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(ex[0], LabeledExample::with_context("P", "H", LabelId(1)));
    }

    #[test]
    fn declared_sizes_enforced_and_order_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let lines: String = (0..5)
            .map(|i| format!("{{\"text\":\"t{i}\",\"label\":\"{}\"}}\n", if i % 2 == 0 { "positive" } else { "negative" }))
            .collect();
        fs::write(dir.path().join("pool.jsonl"), &lines).unwrap();
        fs::write(dir.path().join("test.jsonl"), &lines).unwrap();
        let m = sst2_manifest(dir.path(), "[declared_sizes]\npool = 5\ntest = 5\n");
        let d = Dataset::load(&m).unwrap();
        assert_eq!(d.pool.iter().map(|e| e.input.as_str()).collect::<Vec<_>>(), ["t0", "t1", "t2", "t3", "t4"]);
        assert_eq!(Dataset::load(&m).unwrap().pool, d.pool);

        let m = sst2_manifest(dir.path(), "[declared_sizes]\npool = 6920\n");
        assert!(matches!(
            Dataset::load(&m),
            Err(IngestError::SizeMismatch { declared: 6920, actual: 5, .. })
        ));
    }

    #[test]
    fn incomplete_pool_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("pool.jsonl"), "{\"text\":\"a\",\"label\":\"positive\"}\n").unwrap();
        fs::write(dir.path().join("test.jsonl"), "{\"text\":\"a\",\"label\":\"positive\"}\n").unwrap();
        let m = sst2_manifest(dir.path(), "");
        assert!(matches!(Dataset::load(&m), Err(IngestError::IncompletePool(_))));
    }
}
