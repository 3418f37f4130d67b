//! Annotation records and their JSONL format.
//!
//! One object per line:
//!
//! ```text
//! {"id": "a1", "prompt": "...", "image": "imgs/a1.png", "normal": false,
//!  "labels": {"L2: Abnormal Human Anatomy": ["L3: Hand Structure Deformity"]},
//!  "tags": [], "split": "train", "source_model": "sdxl"}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::exec::Exec;
use crate::taxonomy::{canonical_taxonomy, validate_labelset, L2Entry, L2Label, L3Label, LabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Cot,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "cot" => Ok(Split::Cot),
            other => Err(format!(
                "unknown split {other:?} (expected train, test or cot)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub id: String,
    pub prompt: String,
    pub image: String,
    pub labels: LabelSet,
    pub tags: Vec<String>,
    pub split: Split,
    pub source_model: Option<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Line {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Line { line, .. } | DatasetError::DuplicateId { line, .. } => Some(*line),
            DatasetError::Io { .. } => None,
        }
    }
}

/// Error converting a JSON label map into a label set.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct LabelJsonError {
    pub message: String,
}

fn label_err(message: impl Into<String>) -> LabelJsonError {
    LabelJsonError {
        message: message.into(),
    }
}

/// Reads `{"L2: ...": true | ["L3: ...", ...]}` into a validated label set.
pub fn labelset_from_json(
    normal: bool,
    labels: Option<&Value>,
) -> Result<LabelSet, LabelJsonError> {
    let mut l2 = BTreeMap::new();
    match labels {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (key, value) in map {
                let label = L2Label::from_name(key)
                    .ok_or_else(|| label_err(format!("unknown L2 label {key:?}")))?;
                let entry = match value {
                    Value::Bool(true) => L2Entry::All,
                    Value::Array(items) => {
                        let mut subs = BTreeSet::new();
                        for item in items {
                            let name = item.as_str().ok_or_else(|| {
                                label_err(format!("{key:?}: L3 entries must be strings"))
                            })?;
                            let l3 = L3Label::from_name(name)
                                .ok_or_else(|| label_err(format!("unknown L3 label {name:?}")))?;
                            if !subs.insert(l3) {
                                return Err(label_err(format!("duplicate L3 label {name:?}")));
                            }
                        }
                        L2Entry::Subtypes(subs)
                    }
                    _ => return Err(label_err(format!("{key:?}: expected true or a list"))),
                };
                l2.insert(label, entry);
            }
        }
        Some(_) => return Err(label_err("expected an object")),
    }
    let set = LabelSet { normal, l2 };
    let report = validate_labelset(canonical_taxonomy(), &set);
    if let Some(v) = report.violations.first() {
        return Err(label_err(v.to_string()));
    }
    Ok(set)
}

/// Inverse of [`labelset_from_json`]; keys in canonical order.
pub fn labelset_to_json(set: &LabelSet) -> Value {
    let mut map = Map::new();
    for (l2, entry) in &set.l2 {
        let v = match entry {
            L2Entry::All => Value::Bool(true),
            L2Entry::Subtypes(s) => Value::Array(
                s.iter()
                    .map(|l| Value::String(l.name().to_string()))
                    .collect(),
            ),
        };
        map.insert(l2.name().to_string(), v);
    }
    Value::Object(map)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    prompt: String,
    image: String,
    normal: bool,
    #[serde(default)]
    labels: Option<Value>,
    #[serde(default)]
    tags: Vec<String>,
    split: String,
    #[serde(default)]
    source_model: Option<String>,
}

fn field_of(message: &str) -> String {
    // serde_json messages name the offending field as `field`
    for marker in ["missing field `", "unknown field `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "<record>".to_string()
}

/// Parses one JSONL line (1-based `line` for error messages).
pub fn parse_record(line: usize, text: &str) -> Result<AnnotationRecord, DatasetError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        DatasetError::Line {
            line,
            field: field_of(&message),
            message,
        }
    })?;
    let split = raw
        .split
        .parse::<Split>()
        .map_err(|message| DatasetError::Line {
            line,
            field: "split".into(),
            message,
        })?;
    let labels =
        labelset_from_json(raw.normal, raw.labels.as_ref()).map_err(|e| DatasetError::Line {
            line,
            field: "labels".into(),
            message: e.message,
        })?;
    if raw.id.is_empty() {
        return Err(DatasetError::Line {
            line,
            field: "id".into(),
            message: "id must not be empty".into(),
        });
    }
    Ok(AnnotationRecord {
        id: raw.id,
        prompt: raw.prompt,
        image: raw.image,
        labels,
        tags: raw.tags,
        split,
        source_model: raw.source_model,
    })
}

/// Every non-blank line parsed independently, paired with its 1-based line
/// number. Duplicate ids are reported on their second occurrence.
pub fn parse_records(
    text: &str,
    exec: Exec,
) -> Vec<(usize, Result<AnnotationRecord, DatasetError>)> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut parsed = exec.map(&lines, |&(n, l)| (n, parse_record(n, l)));
    let mut seen = BTreeSet::new();
    for (n, res) in parsed.iter_mut() {
        if let Ok(r) = res {
            if !seen.insert(r.id.clone()) {
                *res = Err(DatasetError::DuplicateId {
                    line: *n,
                    id: r.id.clone(),
                });
            }
        }
    }
    parsed
}

pub fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a dataset file, failing on the first bad line.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let text = read_text(path)?;
    parse_records(&text, Exec::Parallel)
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

pub fn record_to_json(r: &AnnotationRecord) -> Value {
    let mut v = serde_json::json!({
        "id": r.id,
        "prompt": r.prompt,
        "image": r.image,
        "normal": r.labels.normal,
        "labels": labelset_to_json(&r.labels),
        "tags": r.tags,
        "split": r.split,
    });
    if let Some(m) = &r.source_model {
        v["source_model"] = Value::String(m.clone());
    }
    v
}

/// Annotation guideline lint: more than `max_issues` marked issues, unless
/// the catch-all "L3: Abnormal Human Anatomy" is used.
pub fn lint_issue_cap(set: &LabelSet, max_issues: usize) -> Option<String> {
    if set.l3_set().contains(&L3Label::AbnormalHumanAnatomy) {
        return None;
    }
    let n = set.issue_count();
    (n > max_issues).then(|| format!("{n} issues marked, guideline allows {max_issues}"))
}

/// Lint: an artifact verdict without any L2 label.
pub fn lint_unlabeled_artifact(set: &LabelSet) -> Option<String> {
    (!set.normal && set.l2.is_empty()).then(|| "artifact verdict without any L2 label".to_string())
}
