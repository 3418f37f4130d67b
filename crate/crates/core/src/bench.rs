//! Artifact benchmark over generated images.
//!
//! Three steps: verify that the prompt's subject appears in each image,
//! assess verified images with the assessor model, then score every label as
//! `100 * (1 - N_label / N_label_set)`.
//!
//! Scoring rules:
//! - generation failures leave both numerator and denominator
//! - a missing subject counts against the prompt's subject class and Overall
//! - an assessed L2 label counts against its class when the prompt belongs to
//!   that class; Interaction and Overall cover every prompt
//! - an unparsable assessment counts against Overall
//! - items whose port calls failed are excluded and reported separately

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::labelset_to_json;
use crate::exec::Exec;
use crate::gateway::{AssessorPort, Port, VerifierPort};
use crate::parser::parse_response;
use crate::taxonomy::{L2Label, LabelSet};

/// Prompts per sub-category in a full benchmark set.
pub const FULL_CATEGORY_SIZE: usize = 100;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "webp"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    HumanSingle,
    HumanDouble,
    HumanMultiple,
    AnimalSingle,
    AnimalMultiple,
    ObjectSingle,
    ObjectMultiple,
    ObjectCompose,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::HumanSingle,
        Category::HumanDouble,
        Category::HumanMultiple,
        Category::AnimalSingle,
        Category::AnimalMultiple,
        Category::ObjectSingle,
        Category::ObjectMultiple,
        Category::ObjectCompose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::HumanSingle => "human_single",
            Category::HumanDouble => "human_double",
            Category::HumanMultiple => "human_multiple",
            Category::AnimalSingle => "animal_single",
            Category::AnimalMultiple => "animal_multiple",
            Category::ObjectSingle => "object_single",
            Category::ObjectMultiple => "object_multiple",
            Category::ObjectCompose => "object_compose",
        }
    }

    pub fn subject_class(self) -> SubjectClass {
        match self {
            Category::HumanSingle | Category::HumanDouble | Category::HumanMultiple => {
                SubjectClass::Human
            }
            Category::AnimalSingle | Category::AnimalMultiple => SubjectClass::Animal,
            Category::ObjectSingle | Category::ObjectMultiple | Category::ObjectCompose => {
                SubjectClass::Object
            }
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SubjectClass {
    Human,
    Animal,
    Object,
}

impl SubjectClass {
    pub fn label(self) -> L2Label {
        match self {
            SubjectClass::Human => L2Label::AbnormalHumanAnatomy,
            SubjectClass::Animal => L2Label::AbnormalAnimalAnatomy,
            SubjectClass::Object => L2Label::AbnormalObjectMorphology,
        }
    }
}

/// The instruction every benchmark prompt ends with.
pub fn subject_suffix(subject: &str) -> String {
    format!("The image must include the complete '{subject}'.")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchPrompt {
    pub id: String,
    pub text: String,
    pub subject: String,
    pub category: Category,
}

impl BenchPrompt {
    pub fn subject_class(&self) -> SubjectClass {
        self.category.subject_class()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub prompts: Vec<BenchPrompt>,
    /// True unless every category has exactly [`FULL_CATEGORY_SIZE`] prompts.
    pub partial: bool,
}

impl PromptSet {
    pub fn per_category(&self) -> BTreeMap<Category, usize> {
        let mut m: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
        for p in &self.prompts {
            *m.entry(p.category).or_default() += 1;
        }
        m
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("prompt line {line}: {message}")]
    Prompt { line: usize, message: String },
    #[error("audit line {line}: {message}")]
    Audit { line: usize, message: String },
    #[error("{failed} of {total} items failed on transport, above the {threshold:.0}% limit")]
    TooManyFailures {
        failed: usize,
        total: usize,
        threshold: f64,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrompt {
    id: String,
    text: String,
    subject: String,
    category: String,
}

pub fn parse_prompts(text: &str) -> Result<PromptSet, BenchError> {
    let mut prompts = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| BenchError::Prompt {
            line: line_no,
            message,
        };
        let raw: RawPrompt = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let category = raw
            .category
            .parse::<Category>()
            .map_err(|m| err(format!("prompt {}: {m}", raw.id)))?;
        if raw.subject.trim().is_empty() {
            return Err(err(format!("prompt {}: empty subject", raw.id)));
        }
        if !raw.text.trim_end().ends_with(&subject_suffix(&raw.subject)) {
            return Err(err(format!(
                "prompt {}: text does not end with {:?}",
                raw.id,
                subject_suffix(&raw.subject)
            )));
        }
        if !seen.insert(raw.id.clone()) {
            return Err(err(format!("duplicate prompt id {:?}", raw.id)));
        }
        prompts.push(BenchPrompt {
            id: raw.id,
            text: raw.text,
            subject: raw.subject,
            category,
        });
    }
    let mut set = PromptSet {
        prompts,
        partial: false,
    };
    set.partial = set
        .per_category()
        .values()
        .any(|&n| n != FULL_CATEGORY_SIZE);
    Ok(set)
}

pub fn load_prompts(path: &Path) -> Result<PromptSet, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_prompts(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Pending,
    Present,
    Absent,
    GenerationFailed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assessment {
    Labels(LabelSet),
    Unparsable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchItem {
    pub prompt: BenchPrompt,
    pub image: Option<PathBuf>,
    pub verification: Verification,
    pub raw_response: Option<String>,
    pub assessment: Option<Assessment>,
    pub errors: Vec<String>,
}

impl BenchItem {
    pub fn new(prompt: BenchPrompt, image: Option<PathBuf>) -> Self {
        let verification = if image.is_some() {
            Verification::Pending
        } else {
            Verification::GenerationFailed
        };
        BenchItem {
            prompt,
            image,
            verification,
            raw_response: None,
            assessment: None,
            errors: Vec::new(),
        }
    }

    /// Finished without transport errors; nothing left to call.
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
            && match self.verification {
                Verification::Absent | Verification::GenerationFailed => true,
                Verification::Present => self.assessment.is_some(),
                Verification::Pending => false,
            }
    }

    fn image_str(&self) -> String {
        self.image
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default()
    }

    /// Whether this item counts as an artifact for the Overall score.
    pub fn is_artifact(&self) -> bool {
        match (&self.verification, &self.assessment) {
            (Verification::Absent, _) => true,
            (Verification::Present, Some(Assessment::Unparsable)) => true,
            (Verification::Present, Some(Assessment::Labels(l))) => !l.normal,
            _ => false,
        }
    }
}

/// Finds `<id>.{png,jpg,jpeg,webp}` under `dir` for every prompt. Prompts
/// without an image are marked as generation failures.
pub fn locate_images(prompts: &[BenchPrompt], dir: &Path) -> Vec<BenchItem> {
    prompts
        .iter()
        .map(|p| {
            let image = IMAGE_EXTENSIONS
                .iter()
                .map(|ext| dir.join(format!("{}.{ext}", p.id)))
                .find(|path| path.is_file());
            BenchItem::new(p.clone(), image)
        })
        .collect()
}

/// Runs subject verification on pending items. Transport failures are
/// recorded on the item, which stays pending.
pub fn verify_subjects<V>(items: &mut [BenchItem], verifier: &V, exec: Exec, max_inflight: usize)
where
    V: VerifierPort + Sync + ?Sized,
{
    exec.for_each_bounded(items, max_inflight, |item| {
        if item.verification != Verification::Pending {
            return;
        }
        match verifier.verify(&item.image_str(), &item.prompt.subject) {
            Ok(true) => item.verification = Verification::Present,
            Ok(false) => item.verification = Verification::Absent,
            Err(e) => item.errors.push(format!("verify: {e}")),
        }
    });
}

/// Assesses verified items that have no assessment yet.
pub fn assess_items<A>(items: &mut [BenchItem], assessor: &A, exec: Exec, max_inflight: usize)
where
    A: AssessorPort + Sync + ?Sized,
{
    exec.for_each_bounded(items, max_inflight, |item| {
        if item.verification != Verification::Present || item.assessment.is_some() {
            return;
        }
        match assessor.assess(&item.image_str(), &item.prompt.text) {
            Ok(text) => {
                item.assessment = Some(assessment_of(&text));
                item.raw_response = Some(text);
            }
            Err(e) => item.errors.push(format!("assess: {e}")),
        }
    });
}

fn assessment_of(raw: &str) -> Assessment {
    match parse_response(raw).valid_answer() {
        Some(set) => Assessment::Labels(set.clone()),
        None => Assessment::Unparsable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Tally {
    pub n_label: u64,
    pub n_label_set: u64,
    pub score: f64,
}

impl Tally {
    fn bump(&mut self, artifact: bool) {
        self.n_label_set += 1;
        if artifact {
            self.n_label += 1;
        }
    }

    fn finish(mut self) -> Self {
        self.score = category_score(self.n_label, self.n_label_set);
        self
    }
}

/// `100 * (1 - n_label / n_label_set)`; an empty scope scores 100.
pub fn category_score(n_label: u64, n_label_set: u64) -> f64 {
    if n_label_set == 0 {
        return 100.0;
    }
    100.0 * (1.0 - n_label as f64 / n_label_set as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ExcludedCounts {
    pub generation_failed: u64,
    pub transport_failed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct OutcomeCounts {
    pub absent: u64,
    pub unparsable: u64,
    pub assessed_normal: u64,
    pub assessed_artifact: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    #[serde(rename = "Interaction Score")]
    pub interaction: f64,
    #[serde(rename = "Human Score")]
    pub human: f64,
    #[serde(rename = "Animal Score")]
    pub animal: f64,
    #[serde(rename = "Object Score")]
    pub object: f64,
    #[serde(rename = "Overall Score")]
    pub overall: f64,
    /// Keyed by `Interaction`, `Human`, `Animal`, `Object`, `Overall`.
    pub tallies: BTreeMap<String, Tally>,
    /// Subject-class score restricted to each sub-category.
    pub categories: BTreeMap<String, Tally>,
    pub outcomes: OutcomeCounts,
    pub excluded: ExcludedCounts,
}

pub fn score(items: &[BenchItem]) -> ScoreReport {
    let mut interaction = Tally::default();
    let mut overall = Tally::default();
    let mut by_class: BTreeMap<SubjectClass, Tally> = BTreeMap::new();
    let mut by_category: BTreeMap<Category, Tally> = BTreeMap::new();
    let mut outcomes = OutcomeCounts::default();
    let mut excluded = ExcludedCounts::default();

    let mut sorted: Vec<&BenchItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.prompt.id.cmp(&b.prompt.id));

    for item in sorted {
        if item.verification == Verification::GenerationFailed {
            excluded.generation_failed += 1;
            continue;
        }
        if !item.is_complete() {
            excluded.transport_failed += 1;
            continue;
        }
        let class = item.prompt.subject_class();
        let (class_hit, interaction_hit) = match (&item.verification, &item.assessment) {
            (Verification::Absent, _) => {
                outcomes.absent += 1;
                (true, false)
            }
            (_, Some(Assessment::Unparsable)) => {
                outcomes.unparsable += 1;
                (false, false)
            }
            (_, Some(Assessment::Labels(set))) => {
                if set.normal {
                    outcomes.assessed_normal += 1;
                } else {
                    outcomes.assessed_artifact += 1;
                }
                (
                    set.has(class.label()),
                    set.has(L2Label::IrrationalElementInteraction),
                )
            }
            _ => unreachable!("complete items are absent or assessed"),
        };
        by_class.entry(class).or_default().bump(class_hit);
        by_category
            .entry(item.prompt.category)
            .or_default()
            .bump(class_hit);
        interaction.bump(interaction_hit);
        overall.bump(item.is_artifact());
    }

    let class_tally = |c: SubjectClass| by_class.get(&c).copied().unwrap_or_default().finish();
    let human = class_tally(SubjectClass::Human);
    let animal = class_tally(SubjectClass::Animal);
    let object = class_tally(SubjectClass::Object);
    let interaction = interaction.finish();
    let overall = overall.finish();

    let tallies = [
        ("Interaction", interaction),
        ("Human", human),
        ("Animal", animal),
        ("Object", object),
        ("Overall", overall),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let categories = by_category
        .into_iter()
        .map(|(c, t)| (c.as_str().to_string(), t.finish()))
        .collect();

    ScoreReport {
        interaction: interaction.score,
        human: human.score,
        animal: animal.score,
        object: object.score,
        overall: overall.score,
        tallies,
        categories,
        outcomes,
        excluded,
    }
}

impl ScoreReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Interaction Score  Human Score  Animal Score  Object Score  Overall Score"
        )?;
        write!(
            f,
            "{:>17.2}  {:>11.2}  {:>12.2}  {:>12.2}  {:>13.2}",
            self.interaction, self.human, self.animal, self.object, self.overall
        )
    }
}

/// One line of the per-item audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub prompt_id: String,
    pub category: Category,
    pub image: Option<String>,
    pub verification: Verification,
    pub raw_response: Option<String>,
    pub normal: Option<bool>,
    pub labels: Option<Value>,
    pub unparsable: bool,
    pub errors: Vec<String>,
}

impl AuditRecord {
    pub fn of(item: &BenchItem) -> Self {
        let (normal, labels, unparsable) = match &item.assessment {
            Some(Assessment::Labels(s)) => (Some(s.normal), Some(labelset_to_json(s)), false),
            Some(Assessment::Unparsable) => (None, None, true),
            None => (None, None, false),
        };
        AuditRecord {
            prompt_id: item.prompt.id.clone(),
            category: item.prompt.category,
            image: item.image.as_ref().map(|p| p.display().to_string()),
            verification: item.verification,
            raw_response: item.raw_response.clone(),
            normal,
            labels,
            unparsable,
            errors: item.errors.clone(),
        }
    }

    /// Restores a completed item. The assessment is re-derived from the raw
    /// response so the audit never has to be trusted for labels.
    fn restore(&self, item: &mut BenchItem) {
        item.verification = self.verification;
        item.image = self.image.as_ref().map(PathBuf::from);
        item.raw_response = self.raw_response.clone();
        item.assessment = self.raw_response.as_deref().map(assessment_of);
        item.errors.clear();
    }

    fn is_complete(&self) -> bool {
        self.errors.is_empty()
            && match self.verification {
                Verification::Absent | Verification::GenerationFailed => true,
                Verification::Present => self.raw_response.is_some(),
                Verification::Pending => false,
            }
    }
}

/// Reads an audit file. Later lines for the same prompt override earlier ones.
pub fn read_audit(path: &Path) -> Result<HashMap<String, AuditRecord>, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AuditRecord = serde_json::from_str(line).map_err(|e| BenchError::Audit {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(rec.prompt_id.clone(), rec);
    }
    Ok(out)
}

pub fn write_audit(path: &Path, items: &[BenchItem]) -> Result<(), BenchError> {
    let mut sorted: Vec<&BenchItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.prompt.id.cmp(&b.prompt.id));
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for item in sorted {
            let line = serde_json::to_string(&AuditRecord::of(item)).expect("audit serializes");
            writeln!(w, "{line}").map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn append_audit(path: &Path, items: &[BenchItem]) -> Result<(), BenchError> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&AuditRecord::of(item)).expect("audit serializes");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Clone, Copy)]
pub struct BenchPorts<'a> {
    pub verifier: &'a dyn Port,
    pub assessor: &'a dyn Port,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub exec: Exec,
    pub max_inflight: usize,
    pub audit_path: Option<PathBuf>,
    /// Reuse completed items from an existing audit file.
    pub resume: bool,
    /// Abort when more than this fraction of items fail on transport.
    pub failure_threshold: f64,
    /// Items processed between audit checkpoints.
    pub checkpoint_every: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            exec: Exec::Parallel,
            max_inflight: 8,
            audit_path: None,
            resume: false,
            failure_threshold: 0.10,
            checkpoint_every: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: ScoreReport,
    pub items: Vec<BenchItem>,
    /// Items restored from the audit instead of calling ports.
    pub resumed: usize,
}

/// Full pipeline: locate images, verify, assess, score. With an audit path,
/// completed items are appended as they finish and the file is rewritten in
/// prompt-id order at the end.
pub fn run_bench(
    prompts: &[BenchPrompt],
    images_dir: &Path,
    ports: BenchPorts<'_>,
    config: &BenchConfig,
) -> Result<BenchRun, BenchError> {
    let mut items = locate_images(prompts, images_dir);

    let mut resumed = 0;
    if let (true, Some(path)) = (config.resume, config.audit_path.as_deref()) {
        if path.exists() {
            let audit = read_audit(path)?;
            for item in items.iter_mut() {
                match audit.get(&item.prompt.id) {
                    Some(rec) if rec.is_complete() => {
                        rec.restore(item);
                        resumed += 1;
                    }
                    // verified before a later step failed
                    Some(rec) if rec.verification == Verification::Present => {
                        item.verification = Verification::Present;
                    }
                    _ => {}
                }
            }
        }
    } else if let Some(path) = config.audit_path.as_deref() {
        if path.exists() {
            fs::remove_file(path).map_err(io_err(path))?;
        }
    }

    let width = config.max_inflight.max(1);
    let step = config.checkpoint_every.max(1);
    let mut start = 0;
    while start < items.len() {
        let end = (start + step).min(items.len());
        let chunk = &mut items[start..end];
        if chunk.iter().any(|i| !i.is_complete()) {
            for item in chunk.iter_mut().filter(|i| !i.is_complete()) {
                item.errors.clear();
            }
            verify_subjects(chunk, ports.verifier, config.exec, width);
            assess_items(chunk, ports.assessor, config.exec, width);
            if let Some(path) = config.audit_path.as_deref() {
                append_audit(path, chunk)?;
            }
        }
        start = end;
    }

    if let Some(path) = config.audit_path.as_deref() {
        write_audit(path, &items)?;
    }

    let failed = items.iter().filter(|i| !i.errors.is_empty()).count();
    if !items.is_empty() && failed as f64 > config.failure_threshold * items.len() as f64 {
        return Err(BenchError::TooManyFailures {
            failed,
            total: items.len(),
            threshold: config.failure_threshold * 100.0,
        });
    }

    Ok(BenchRun {
        report: score(&items),
        items,
        resumed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FnPort, GatewayError, PortRequest, PortResponse};
    use crate::parser::wrap_response;
    use crate::taxonomy::L3Label;

    fn prompt(id: &str, category: Category) -> BenchPrompt {
        let subject = "little boy".to_string();
        BenchPrompt {
            id: id.to_string(),
            text: format!("A boy plays. {}", subject_suffix(&subject)),
            subject,
            category,
        }
    }

    fn item(id: &str, category: Category, v: Verification, a: Option<LabelSet>) -> BenchItem {
        let mut it = BenchItem::new(
            prompt(id, category),
            Some(PathBuf::from(format!("{id}.png"))),
        );
        it.verification = v;
        it.assessment = a.map(Assessment::Labels);
        it
    }

    fn human_artifact() -> LabelSet {
        LabelSet::artifact([(
            L2Label::AbnormalHumanAnatomy,
            vec![L3Label::HandStructureDeformity],
        )])
    }

    #[test]
    fn prompt_loading() {
        let line = |id: &str, cat: &str, text: &str| {
            serde_json::json!({"id": id, "text": text, "subject": "cat", "category": cat})
                .to_string()
        };
        let good = "A cat sleeps. The image must include the complete 'cat'.";
        let text: Vec<String> = Category::ALL
            .iter()
            .enumerate()
            .map(|(i, c)| line(&format!("p{i}"), c.as_str(), good))
            .collect();
        let set = parse_prompts(&text.join("\n")).unwrap();
        assert_eq!(set.prompts.len(), 8);
        assert!(set.partial);
        assert_eq!(set.prompts[3].subject_class(), SubjectClass::Animal);

        let missing = line("bad", "animal_single", "A cat sleeps.");
        let err = parse_prompts(&missing).unwrap_err().to_string();
        assert!(err.contains("bad"), "{err}");
        assert!(parse_prompts(&line("x", "plant_single", good)).is_err());
    }

    #[test]
    fn full_set_is_not_partial() {
        let mut lines = Vec::new();
        for c in Category::ALL {
            for i in 0..FULL_CATEGORY_SIZE {
                lines.push(
                    serde_json::json!({
                        "id": format!("{c}-{i}"),
                        "text": format!("x {}", subject_suffix("dog")),
                        "subject": "dog",
                        "category": c.as_str(),
                    })
                    .to_string(),
                );
            }
        }
        let set = parse_prompts(&lines.join("\n")).unwrap();
        assert_eq!(set.prompts.len(), 800);
        assert!(!set.partial);
        assert!(set.per_category().values().all(|&n| n == 100));
    }

    #[test]
    fn eighty_percent_human_single() {
        let items: Vec<BenchItem> = (0..100)
            .map(|i| {
                let labels = if i < 20 {
                    human_artifact()
                } else {
                    LabelSet::normal()
                };
                item(
                    &format!("h{i:03}"),
                    Category::HumanSingle,
                    Verification::Present,
                    Some(labels),
                )
            })
            .collect();
        let r = score(&items);
        assert_eq!(
            format!("{:.2}", r.categories["human_single"].score),
            "80.00"
        );
        assert_eq!(r.human, 80.0);
        assert_eq!(r.overall, 80.0);
        assert_eq!(r.interaction, 100.0);
    }

    #[test]
    fn all_normal_scores_100() {
        let items: Vec<BenchItem> = Category::ALL
            .iter()
            .map(|c| {
                item(
                    c.as_str(),
                    *c,
                    Verification::Present,
                    Some(LabelSet::normal()),
                )
            })
            .collect();
        let r = score(&items);
        for s in [r.interaction, r.human, r.animal, r.object, r.overall] {
            assert_eq!(s, 100.0);
        }
    }

    #[test]
    fn overall_seventy() {
        let items: Vec<BenchItem> = (0..10)
            .map(|i| {
                let labels = if i < 3 {
                    LabelSet::artifact([(L2Label::AbnormalObjectMorphology, vec![])])
                } else {
                    LabelSet::normal()
                };
                item(
                    &format!("o{i}"),
                    Category::ObjectSingle,
                    Verification::Present,
                    Some(labels),
                )
            })
            .collect();
        let r = score(&items);
        assert!((r.overall - 70.0).abs() < 1e-9);
    }

    #[test]
    fn failures_shrink_denominator() {
        let mut items: Vec<BenchItem> = (0..99)
            .map(|i| {
                item(
                    &format!("a{i:02}"),
                    Category::AnimalSingle,
                    Verification::Present,
                    Some(LabelSet::normal()),
                )
            })
            .collect();
        items.push(BenchItem::new(prompt("zz", Category::AnimalSingle), None));
        items[0].assessment = Some(Assessment::Labels(LabelSet::artifact([(
            L2Label::AbnormalAnimalAnatomy,
            vec![L3Label::AbnormalHeadStructure],
        )])));
        let r = score(&items);
        assert_eq!(r.tallies["Animal"].n_label_set, 99);
        assert_eq!(r.excluded.generation_failed, 1);
        assert_eq!(format!("{:.2}", r.animal), "98.99");
    }

    #[test]
    fn absent_and_unparsable() {
        let mut items = vec![
            item("1", Category::HumanDouble, Verification::Absent, None),
            item("2", Category::ObjectCompose, Verification::Present, None),
            item(
                "3",
                Category::ObjectCompose,
                Verification::Present,
                Some(LabelSet::artifact([(
                    L2Label::IrrationalElementInteraction,
                    vec![L3Label::AbnormalElementOverlap],
                )])),
            ),
            // human label on an object prompt: Overall only
            item(
                "4",
                Category::ObjectSingle,
                Verification::Present,
                Some(human_artifact()),
            ),
        ];
        items[1].assessment = Some(Assessment::Unparsable);
        let r = score(&items);
        assert_eq!(r.tallies["Human"].n_label, 1);
        assert_eq!(r.tallies["Object"].n_label, 0);
        assert_eq!(r.tallies["Object"].n_label_set, 3);
        assert_eq!(r.tallies["Interaction"].n_label, 1);
        assert_eq!(r.tallies["Interaction"].n_label_set, 4);
        assert_eq!(r.tallies["Overall"].n_label, 4);
        assert_eq!(r.outcomes.unparsable, 1);
    }

    #[test]
    fn verify_and_assess_steps() {
        let mut items = vec![
            item("a", Category::HumanSingle, Verification::Pending, None),
            item("noface", Category::HumanSingle, Verification::Pending, None),
            BenchItem::new(prompt("gone", Category::HumanSingle), None),
        ];
        let verifier = FnPort::new(|r: &PortRequest| match r {
            PortRequest::Verify { image, .. } => Ok(PortResponse::Verify {
                present: !image.contains("noface"),
            }),
            _ => unreachable!(),
        });
        verify_subjects(&mut items, &verifier, Exec::Sequential, 1);
        assert_eq!(items[0].verification, Verification::Present);
        assert_eq!(items[1].verification, Verification::Absent);
        assert_eq!(items[2].verification, Verification::GenerationFailed);
        assert_eq!(verifier.calls().len(), 2);

        let assessor = FnPort::new(|_r: &PortRequest| {
            Ok(PortResponse::Assess {
                text: "I cannot help with that.".into(),
            })
        });
        assess_items(&mut items, &assessor, Exec::Sequential, 1);
        assert_eq!(assessor.calls().len(), 1);
        assert_eq!(items[0].assessment, Some(Assessment::Unparsable));
        assert!(items[0].is_artifact());
    }

    #[test]
    fn two_abnormality_assessment() {
        let text = r#"<think>x</think> boxed{{"Whether Normal": False, "Type of Abnormality": {"L2: Abnormal Object Morphology": True, "L2: Abnormal Human Anatomy": ["L3: Abnormal Human Anatomy"]}}}"#;
        match assessment_of(text) {
            Assessment::Labels(s) => assert_eq!(s.l2.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transport_errors_are_recorded() {
        let mut items = vec![item(
            "a",
            Category::HumanSingle,
            Verification::Pending,
            None,
        )];
        let down = FnPort::new(|_r: &PortRequest| {
            Err(GatewayError::Transport {
                attempts: 3,
                last_status: Some(502),
                message: "bad gateway".into(),
            })
        });
        verify_subjects(&mut items, &down, Exec::Sequential, 1);
        assert_eq!(items[0].verification, Verification::Pending);
        assert_eq!(items[0].errors.len(), 1);
        assert!(!items[0].is_complete());
        let r = score(&items);
        assert_eq!(r.excluded.transport_failed, 1);
    }

    #[test]
    fn audit_round_trip_restores() {
        let mut it = item("a", Category::HumanSingle, Verification::Present, None);
        let raw = wrap_response("hand", &human_artifact()).unwrap();
        it.assessment = Some(assessment_of(&raw));
        it.raw_response = Some(raw);
        let rec = AuditRecord::of(&it);
        let back: AuditRecord =
            serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
        let mut fresh = item("a", Category::HumanSingle, Verification::Pending, None);
        back.restore(&mut fresh);
        assert_eq!(fresh, it);
    }
}
