//! The three-level artifact taxonomy and label-set primitives.
//!
//! Level 1 is the binary Normal/Artifact verdict. Level 2 has six coarse
//! categories, four of which carry Level 3 sub-categories (seventeen in
//! total). Label strings are frozen: they must match byte-for-byte, including
//! the `"L2: "` / `"L3: "` prefix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::Serialize;

/// A Level 2 artifact category. Declaration order is canonical taxonomy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum L2Label {
    IrrationalElementAttributes,
    IrrationalElementInteraction,
    AbnormalHumanAnatomy,
    AbnormalAnimalAnatomy,
    AbnormalObjectMorphology,
    OtherIrrationalities,
}

/// A Level 3 artifact sub-category. Declaration order is canonical taxonomy order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum L3Label {
    AbnormalMaterialTexture,
    AbnormalDetailDrawing,
    AbnormalElementProportion,
    AbnormalColorCombination,
    AbnormalLightAndShadowEffect,
    AbnormalElementOverlap,
    AbnormalSpatialPosition,
    LimbStructureDeformity,
    TrunkStructureDeformity,
    HandStructureDeformity,
    FootStructureDeformity,
    FacialStructureDeformity,
    AbnormalHumanAnatomy,
    AbnormalAndUncoordinatedPosture,
    AbnormalLimbStructure,
    AbnormalPosturePresentation,
    AbnormalHeadStructure,
}

impl L2Label {
    pub const ALL: [L2Label; 6] = [
        L2Label::IrrationalElementAttributes,
        L2Label::IrrationalElementInteraction,
        L2Label::AbnormalHumanAnatomy,
        L2Label::AbnormalAnimalAnatomy,
        L2Label::AbnormalObjectMorphology,
        L2Label::OtherIrrationalities,
    ];

    /// The four frequent categories used for balanced sampling, the
    /// multi-label metrics and benchmark scoring.
    pub const MAIN: [L2Label; 4] = [
        L2Label::IrrationalElementInteraction,
        L2Label::AbnormalHumanAnatomy,
        L2Label::AbnormalAnimalAnatomy,
        L2Label::AbnormalObjectMorphology,
    ];

    pub fn name(self) -> &'static str {
        match self {
            L2Label::IrrationalElementAttributes => "L2: Irrational Element Attributes",
            L2Label::IrrationalElementInteraction => "L2: Irrational Element Interaction",
            L2Label::AbnormalHumanAnatomy => "L2: Abnormal Human Anatomy",
            L2Label::AbnormalAnimalAnatomy => "L2: Abnormal Animal Anatomy",
            L2Label::AbnormalObjectMorphology => "L2: Abnormal Object Morphology",
            L2Label::OtherIrrationalities => "L2: Other Irrationalities",
        }
    }

    pub fn from_name(name: &str) -> Option<L2Label> {
        L2Label::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn children(self) -> &'static [L3Label] {
        use L3Label::*;
        match self {
            L2Label::IrrationalElementAttributes => &[
                AbnormalMaterialTexture,
                AbnormalDetailDrawing,
                AbnormalElementProportion,
                AbnormalColorCombination,
            ],
            L2Label::IrrationalElementInteraction => &[
                AbnormalLightAndShadowEffect,
                AbnormalElementOverlap,
                AbnormalSpatialPosition,
            ],
            L2Label::AbnormalHumanAnatomy => &[
                LimbStructureDeformity,
                TrunkStructureDeformity,
                HandStructureDeformity,
                FootStructureDeformity,
                FacialStructureDeformity,
                AbnormalHumanAnatomy,
                AbnormalAndUncoordinatedPosture,
            ],
            L2Label::AbnormalAnimalAnatomy => &[
                AbnormalLimbStructure,
                AbnormalPosturePresentation,
                AbnormalHeadStructure,
            ],
            L2Label::AbnormalObjectMorphology | L2Label::OtherIrrationalities => &[],
        }
    }

    pub fn has_children(self) -> bool {
        !self.children().is_empty()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl L3Label {
    pub const ALL: [L3Label; 17] = [
        L3Label::AbnormalMaterialTexture,
        L3Label::AbnormalDetailDrawing,
        L3Label::AbnormalElementProportion,
        L3Label::AbnormalColorCombination,
        L3Label::AbnormalLightAndShadowEffect,
        L3Label::AbnormalElementOverlap,
        L3Label::AbnormalSpatialPosition,
        L3Label::LimbStructureDeformity,
        L3Label::TrunkStructureDeformity,
        L3Label::HandStructureDeformity,
        L3Label::FootStructureDeformity,
        L3Label::FacialStructureDeformity,
        L3Label::AbnormalHumanAnatomy,
        L3Label::AbnormalAndUncoordinatedPosture,
        L3Label::AbnormalLimbStructure,
        L3Label::AbnormalPosturePresentation,
        L3Label::AbnormalHeadStructure,
    ];

    pub fn name(self) -> &'static str {
        use L3Label::*;
        match self {
            AbnormalMaterialTexture => "L3: Abnormal Material Texture",
            AbnormalDetailDrawing => "L3: Abnormal Detail Drawing",
            AbnormalElementProportion => "L3: Abnormal Element Proportion",
            AbnormalColorCombination => "L3: Abnormal Color Combination",
            AbnormalLightAndShadowEffect => "L3: Abnormal Light and Shadow Effect",
            AbnormalElementOverlap => "L3: Abnormal Element Overlap",
            AbnormalSpatialPosition => "L3: Abnormal Spatial Position",
            LimbStructureDeformity => "L3: Limb Structure Deformity",
            TrunkStructureDeformity => "L3: Trunk Structure Deformity",
            HandStructureDeformity => "L3: Hand Structure Deformity",
            FootStructureDeformity => "L3: Foot Structure Deformity",
            FacialStructureDeformity => "L3: Facial Structure Deformity",
            AbnormalHumanAnatomy => "L3: Abnormal Human Anatomy",
            AbnormalAndUncoordinatedPosture => "L3: Abnormal and Uncoordinated Posture",
            AbnormalLimbStructure => "L3: Abnormal Limb Structure",
            AbnormalPosturePresentation => "L3: Abnormal Posture Presentation",
            AbnormalHeadStructure => "L3: Abnormal Head Structure",
        }
    }

    pub fn from_name(name: &str) -> Option<L3Label> {
        L3Label::ALL.into_iter().find(|l| l.name() == name)
    }

    pub fn parent(self) -> L2Label {
        L2Label::ALL
            .into_iter()
            .find(|p| p.children().contains(&self))
            .expect("every L3 label has a parent")
    }
}

impl fmt::Display for L2Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for L3Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

/// A node of the taxonomy tree. The L1 node is the binary verdict itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelId {
    L1,
    L2(L2Label),
    L3(L3Label),
}

impl LabelId {
    pub fn level(self) -> Level {
        match self {
            LabelId::L1 => Level::L1,
            LabelId::L2(_) => Level::L2,
            LabelId::L3(_) => Level::L3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelId::L1 => "Whether Normal",
            LabelId::L2(l) => l.name(),
            LabelId::L3(l) => l.name(),
        }
    }
}

/// The fixed taxonomy tree with explicit parent/children maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    nodes: Vec<LabelId>,
    parent: BTreeMap<L3Label, L2Label>,
    children: BTreeMap<L2Label, Vec<L3Label>>,
}

/// Returns the canonical taxonomy. Constructed once and shared.
pub fn canonical_taxonomy() -> &'static Taxonomy {
    static TAXONOMY: OnceLock<Taxonomy> = OnceLock::new();
    TAXONOMY.get_or_init(|| {
        let mut nodes = vec![LabelId::L1];
        let mut parent = BTreeMap::new();
        let mut children = BTreeMap::new();
        for l2 in L2Label::ALL {
            nodes.push(LabelId::L2(l2));
            children.insert(l2, l2.children().to_vec());
            for &l3 in l2.children() {
                nodes.push(LabelId::L3(l3));
                parent.insert(l3, l2);
            }
        }
        Taxonomy {
            nodes,
            parent,
            children,
        }
    })
}

impl Taxonomy {
    pub fn nodes(&self) -> &[LabelId] {
        &self.nodes
    }

    pub fn l2_labels(&self) -> impl Iterator<Item = L2Label> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            LabelId::L2(l) => Some(*l),
            _ => None,
        })
    }

    pub fn l3_labels(&self) -> impl Iterator<Item = L3Label> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            LabelId::L3(l) => Some(*l),
            _ => None,
        })
    }

    pub fn parent(&self, l3: L3Label) -> L2Label {
        self.parent[&l3]
    }

    pub fn children(&self, l2: L2Label) -> &[L3Label] {
        &self.children[&l2]
    }

    /// Checks that the parent and children maps describe the same tree.
    pub fn is_consistent(&self) -> bool {
        let from_children: usize = self.children.values().map(Vec::len).sum();
        from_children == self.parent.len()
            && self
                .children
                .iter()
                .all(|(l2, kids)| kids.iter().all(|k| self.parent.get(k) == Some(l2)))
    }

    /// JSON export with stable key order: L2 names in canonical order, each
    /// mapping to its list of L3 names.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for l2 in self.l2_labels() {
            let kids: Vec<serde_json::Value> = self
                .children(l2)
                .iter()
                .map(|c| serde_json::Value::String(c.name().to_string()))
                .collect();
            map.insert(l2.name().to_string(), serde_json::Value::Array(kids));
        }
        serde_json::json!({
            "levels": ["L1", "L2", "L3"],
            "l1": "Whether Normal",
            "l2": serde_json::Value::Object(map),
        })
    }
}

/// Value attached to an L2 key in a label set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum L2Entry {
    /// L2 present with no sub-tags, rendered as `True`.
    All,
    Subtypes(BTreeSet<L3Label>),
}

/// One image's verdict: the normal flag plus hierarchical L2 -> L3 labels.
///
/// The type admits invalid combinations (an L3 under the wrong parent, labels
/// on a normal image) so that parsed model output can be represented before
/// it is checked with [`validate_labelset`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LabelSet {
    pub normal: bool,
    pub l2: BTreeMap<L2Label, L2Entry>,
}

impl LabelSet {
    pub fn normal() -> Self {
        LabelSet {
            normal: true,
            l2: BTreeMap::new(),
        }
    }

    /// An artifact label set built from `(l2, l3s)` pairs. An empty `l3s`
    /// slice yields the `All` sentinel.
    pub fn artifact<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (L2Label, Vec<L3Label>)>,
    {
        let l2 = entries
            .into_iter()
            .map(|(k, v)| {
                let entry = if v.is_empty() {
                    L2Entry::All
                } else {
                    L2Entry::Subtypes(v.into_iter().collect())
                };
                (k, entry)
            })
            .collect();
        LabelSet { normal: false, l2 }
    }

    pub fn l2_set(&self) -> BTreeSet<L2Label> {
        self.l2.keys().copied().collect()
    }

    /// All L3 labels regardless of which key they sit under.
    pub fn l3_set(&self) -> BTreeSet<L3Label> {
        self.l2
            .values()
            .filter_map(|e| match e {
                L2Entry::Subtypes(s) => Some(s.iter().copied()),
                L2Entry::All => None,
            })
            .flatten()
            .collect()
    }

    pub fn has(&self, l2: L2Label) -> bool {
        self.l2.contains_key(&l2)
    }

    /// Number of L2 issues plus L3 issues beyond the first per L2.
    pub fn issue_count(&self) -> usize {
        self.l2
            .values()
            .map(|e| match e {
                L2Entry::All => 1,
                L2Entry::Subtypes(s) => s.len().max(1),
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NormalWithLabels,
    WrongParent { l3: L3Label, under: L2Label },
    EmptySubtypes(L2Label),
    MissingSubtypes(L2Label),
    UnexpectedSubtypes(L2Label),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NormalWithLabels => f.write_str("normal image carries artifact labels"),
            Violation::WrongParent { l3, under } => write!(
                f,
                "\"{l3}\" listed under \"{under}\" but belongs to \"{}\"",
                l3.parent()
            ),
            Violation::EmptySubtypes(l2) => write!(f, "\"{l2}\" has an empty sub-tag list"),
            Violation::MissingSubtypes(l2) => {
                write!(f, "\"{l2}\" has sub-tags defined but was marked True")
            }
            Violation::UnexpectedSubtypes(l2) => {
                write!(f, "\"{l2}\" has no sub-tags but was given a list")
            }
        }
    }
}

/// Result of validating a label set: every violation found, in key order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_labelset(taxonomy: &Taxonomy, set: &LabelSet) -> ValidationResult {
    let mut violations = Vec::new();
    if set.normal && !set.l2.is_empty() {
        violations.push(Violation::NormalWithLabels);
    }
    for (&l2, entry) in &set.l2 {
        let kids = taxonomy.children(l2);
        match entry {
            L2Entry::All if !kids.is_empty() => violations.push(Violation::MissingSubtypes(l2)),
            L2Entry::All => {}
            L2Entry::Subtypes(_) if kids.is_empty() => {
                violations.push(Violation::UnexpectedSubtypes(l2))
            }
            L2Entry::Subtypes(s) if s.is_empty() => violations.push(Violation::EmptySubtypes(l2)),
            L2Entry::Subtypes(s) => {
                for &l3 in s {
                    if taxonomy.parent(l3) != l2 {
                        violations.push(Violation::WrongParent { l3, under: l2 });
                    }
                }
            }
        }
    }
    ValidationResult { violations }
}

/// Which flat label set to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffLevel {
    L2,
    L3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DiffCounts {
    pub n_correct: usize,
    pub n_miss: usize,
    pub n_extra: usize,
}

impl DiffCounts {
    pub fn between<T: Ord>(gt: &BTreeSet<T>, pred: &BTreeSet<T>) -> Self {
        let n_correct = gt.intersection(pred).count();
        DiffCounts {
            n_correct,
            n_miss: gt.len() - n_correct,
            n_extra: pred.len() - n_correct,
        }
    }

    pub fn gt_len(&self) -> usize {
        self.n_correct + self.n_miss
    }

    pub fn pred_len(&self) -> usize {
        self.n_correct + self.n_extra
    }
}

/// Set difference at one level. L3 compares the union of all L3 entries and
/// ignores which parent they were listed under.
pub fn diff_labels(gt: &LabelSet, pred: &LabelSet, level: DiffLevel) -> DiffCounts {
    match level {
        DiffLevel::L2 => DiffCounts::between(&gt.l2_set(), &pred.l2_set()),
        DiffLevel::L3 => DiffCounts::between(&gt.l3_set(), &pred.l3_set()),
    }
}
