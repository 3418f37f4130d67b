use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

use arteval_core::dataset::{labelset_from_json, parse_records, AnnotationRecord, Split};
use arteval_core::parser::parse_response;
use arteval_core::{Exec, LabelSet, ParsedResponse};

use crate::error::{domain, CliResult, ResultExt};

pub fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .usage()
}

pub fn write_string(path: &Path, text: &str) -> CliResult {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .usage()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult {
    let ctx = || format!("cannot write {}", path.display());
    let mut w = BufWriter::new(File::create(path).with_context(ctx).usage()?);
    for row in rows {
        let line = serde_json::to_string(&row).expect("rows serialize");
        writeln!(w, "{line}").with_context(ctx).usage()?;
    }
    w.flush().with_context(ctx).usage()
}

/// Loads ground-truth annotations, optionally restricted to one split.
/// Any malformed record is a domain failure.
pub fn load_gt(path: &Path, split: Option<Split>, exec: Exec) -> CliResult<Vec<AnnotationRecord>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (_, res) in parse_records(&text, exec) {
        let rec = res.map_err(|e| domain(format!("{}: {e}", path.display())))?;
        if split.is_none_or(|s| rec.split == s) {
            out.push(rec);
        }
    }
    Ok(out)
}

/// One model output: either a raw response to parse or structured labels.
#[derive(Debug, Clone)]
pub enum Prediction {
    Response(String),
    Labels(LabelSet),
}

impl Prediction {
    pub fn parsed(&self) -> Option<ParsedResponse> {
        match self {
            Prediction::Response(text) => Some(parse_response(text)),
            Prediction::Labels(_) => None,
        }
    }

    /// The predicted label set, `None` when unparsable.
    pub fn labels(&self) -> Option<LabelSet> {
        match self {
            Prediction::Response(text) => parse_response(text).valid_answer().cloned(),
            Prediction::Labels(set) => Some(set.clone()),
        }
    }
}

/// Reads `{"id", "response"}` or `{"id", "normal", "labels"}` lines.
pub fn load_predictions(path: &Path) -> CliResult<BTreeMap<String, Prediction>> {
    let text = read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}: line {}", path.display(), i + 1);
        let v: Value = serde_json::from_str(line).map_err(|e| domain(format!("{}: {e}", at())))?;
        let id = v
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| domain(format!("{}: missing string field `id`", at())))?
            .to_string();
        let pred = if let Some(r) = v.get("response") {
            let r = r
                .as_str()
                .ok_or_else(|| domain(format!("{}: `response` must be a string", at())))?;
            Prediction::Response(r.to_string())
        } else {
            let normal = v
                .get("normal")
                .and_then(Value::as_bool)
                .ok_or_else(|| domain(format!("{}: needs `response` or `normal`", at())))?;
            let set = labelset_from_json(normal, v.get("labels"))
                .map_err(|e| domain(format!("{}: {e}", at())))?;
            Prediction::Labels(set)
        };
        if out.insert(id.clone(), pred).is_some() {
            return Err(domain(format!("{}: duplicate id {id:?}", at())));
        }
    }
    Ok(out)
}

/// Pairs ground truth with predictions by id, in ground-truth order. Ids
/// present on only one side are reported and fail the command.
pub fn pair_by_id<'a>(
    gt: &'a [AnnotationRecord],
    preds: &'a BTreeMap<String, Prediction>,
) -> CliResult<Vec<(&'a AnnotationRecord, &'a Prediction)>> {
    let gt_ids: BTreeSet<&str> = gt.iter().map(|r| r.id.as_str()).collect();
    let no_pred: Vec<&str> = gt
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| !preds.contains_key(*id))
        .collect();
    let no_gt: Vec<&str> = preds
        .keys()
        .map(String::as_str)
        .filter(|id| !gt_ids.contains(id))
        .collect();
    if !no_pred.is_empty() || !no_gt.is_empty() {
        let mut msg = String::from("unmatched ids");
        if !no_pred.is_empty() {
            msg.push_str(&format!("\n  without prediction: {}", no_pred.join(", ")));
        }
        if !no_gt.is_empty() {
            msg.push_str(&format!("\n  without ground truth: {}", no_gt.join(", ")));
        }
        return Err(domain(msg));
    }
    Ok(gt.iter().map(|r| (r, &preds[&r.id])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str) -> AnnotationRecord {
        AnnotationRecord {
            id: id.into(),
            prompt: String::new(),
            image: String::new(),
            labels: LabelSet::normal(),
            tags: vec![],
            split: Split::Test,
            source_model: None,
        }
    }

    #[test]
    fn pairs_follow_ground_truth_order() {
        let gt = [rec("b"), rec("a")];
        let preds: BTreeMap<String, Prediction> = ["a", "b"]
            .iter()
            .map(|id| (id.to_string(), Prediction::Labels(LabelSet::normal())))
            .collect();
        let pairs = pair_by_id(&gt, &preds).unwrap();
        let ids: Vec<&str> = pairs.iter().map(|(r, _)| r.id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
    }

    #[test]
    fn unmatched_on_both_sides() {
        let gt = [rec("a"), rec("b")];
        let mut preds = BTreeMap::new();
        preds.insert("b".to_string(), Prediction::Labels(LabelSet::normal()));
        preds.insert("c".to_string(), Prediction::Labels(LabelSet::normal()));
        let err = pair_by_id(&gt, &preds).unwrap_err().to_string();
        assert!(err.contains("without prediction: a"), "{err}");
        assert!(err.contains("without ground truth: c"), "{err}");
    }

    #[test]
    fn prediction_forms() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        fs::write(
            &p,
            "{\"id\": \"a\", \"response\": \"no tags\"}\n\n{\"id\": \"b\", \"normal\": false, \"labels\": {\"L2: Other Irrationalities\": true}}\n",
        )
        .unwrap();
        let preds = load_predictions(&p).unwrap();
        assert!(preds["a"].labels().is_none());
        assert!(preds["a"].parsed().is_some());
        assert!(!preds["b"].labels().unwrap().normal);
        assert!(preds["b"].parsed().is_none());

        fs::write(&p, "{\"id\": \"a\"}\n").unwrap();
        assert!(matches!(
            load_predictions(&p),
            Err(crate::error::CliError::Domain(_))
        ));
        assert!(matches!(
            load_predictions(&dir.path().join("missing")),
            Err(crate::error::CliError::Usage(_))
        ));
    }
}
