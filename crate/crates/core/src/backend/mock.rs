//! Table-driven backend keyed by (SHA-256 of prompt, candidate).
//!
//! The table file is line-delimited JSON, one record per line:
//!
//! ```text
//! {"prompt_sha256":"<64 hex chars>","candidate":"positive","logprob":-0.1}
//! ```
//!
//! A record may carry the raw `prompt` instead of its hash.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScoringBackend, ScoringRequest};
use crate::error::BackendError;
use crate::types::ScoreVector;

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub candidate: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockTable {
    entries: HashMap<(String, String), f64>,
}

impl MockTable {
    pub fn insert(&mut self, prompt: &str, candidate: &str, logprob: f64) {
        self.entries
            .insert((prompt_hash(prompt), candidate.to_string()), logprob);
    }

    pub fn insert_hashed(&mut self, prompt_sha256: &str, candidate: &str, logprob: f64) {
        self.entries
            .insert((prompt_sha256.to_ascii_lowercase(), candidate.to_string()), logprob);
    }

    pub fn get(&self, prompt: &str, candidate: &str) -> Option<f64> {
        self.entries
            .get(&(prompt_hash(prompt), candidate.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, BackendError> {
        let mut table = Self::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| BackendError::MockTable {
                path: path.to_path_buf(),
                message: format!("line {}: {message}", n + 1),
            };
            let rec: MockRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if !rec.logprob.is_finite() {
                return Err(err("logprob is not finite".into()));
            }
            match (&rec.prompt_sha256, &rec.prompt) {
                (Some(h), _) => table.insert_hashed(h, &rec.candidate, rec.logprob),
                (None, Some(p)) => table.insert(p, &rec.candidate, rec.logprob),
                (None, None) => return Err(err("record needs prompt_sha256 or prompt".into())),
            }
        }
        Ok(table)
    }

    /// Writes the table sorted by (hash, candidate) so output is stable.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut keys: Vec<_> = self.entries.iter().collect();
        keys.sort_by(|a, b| a.0.cmp(b.0));
        for ((hash, cand), lp) in keys {
            let rec = MockRecord {
                prompt_sha256: Some(hash.clone()),
                prompt: None,
                candidate: cand.clone(),
                logprob: *lp,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    table: MockTable,
    source: Option<PathBuf>,
}

impl MockBackend {
    pub fn new(table: MockTable) -> Self {
        Self { table, source: None }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::MockTable {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self {
            table: MockTable::parse(&text, path)?,
            source: Some(path.to_path_buf()),
        })
    }

    pub fn table(&self) -> &MockTable {
        &self.table
    }
}

impl ScoringBackend for MockBackend {
    fn score(&self, request: &ScoringRequest) -> Result<ScoreVector, BackendError> {
        request.validate()?;
        let hash = prompt_hash(&request.prompt);
        let scores = request
            .candidates
            .iter()
            .map(|c| {
                self.table
                    .entries
                    .get(&(hash.clone(), c.clone()))
                    .copied()
                    .ok_or_else(|| BackendError::MissingMockEntry {
                        prompt_sha256: hash.clone(),
                        candidate: c.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScoreVector::new(scores)?)
    }

    fn identity(&self) -> String {
        match &self.source {
            Some(p) => format!("mock({})", p.display()),
            None => "mock(in-memory)".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::RequestMeta;

    fn request(prompt: &str, cands: &[&str]) -> ScoringRequest {
        ScoringRequest {
            prompt: prompt.into(),
            candidates: cands.iter().map(|c| c.to_string()).collect(),
            meta: RequestMeta {
                demos: vec![],
                query_context: None,
                query_input: "x".into(),
            },
        }
    }

    #[test]
    fn table_lookup() {
        let mut t = MockTable::default();
        t.insert("promptP", " positive", -0.1);
        t.insert("promptP", " negative", -2.4);
        let b = MockBackend::new(t);
        let s = b.score(&request("promptP", &[" positive", " negative"])).unwrap();
        assert_eq!(s.as_slice(), &[-0.1, -2.4]);
    }

    #[test]
    fn missing_entry_errors() {
        let b = MockBackend::new(MockTable::default());
        assert!(matches!(
            b.score(&request("p", &["a"])),
            Err(BackendError::MissingMockEntry { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let mut t = MockTable::default();
        t.insert("alpha", "a", -1.5);
        t.insert("beta", "b", -0.25);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = MockTable::parse(std::str::from_utf8(&buf).unwrap(), Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn raw_prompt_records_are_hashed() {
        let text = "{\"prompt\":\"hello\",\"candidate\":\"x\",\"logprob\":-3.0}\n\n";
        let t = MockTable::parse(text, Path::new("mem")).unwrap();
        assert_eq!(t.get("hello", "x"), Some(-3.0));
        assert!(MockTable::parse("{\"candidate\":\"x\",\"logprob\":1}", Path::new("mem")).is_err());
        assert!(MockTable::parse("not json", Path::new("mem")).is_err());
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(
            prompt_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
