//! Precision, recall and F1 for the binary artifact verdict and the
//! multi-label L2 task.
//!
//! Only the four main L2 classes enter the macro and micro averages. The two
//! rare classes are still reported per class. Any zero denominator yields 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::Serialize;

use crate::exec::Exec;
use crate::taxonomy::{L2Label, LabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl ConfusionCounts {
    /// Records one binary decision.
    pub fn observe(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn prf(c: ConfusionCounts) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

/// Additive confusion table over evaluation pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionTable {
    /// Indexed by [`L2Label::index`].
    pub per_class: [ConfusionCounts; 6],
    /// Positive class = artifact (`normal == false`).
    pub artifact: ConfusionCounts,
    pub n_pairs: u64,
    /// Predictions that could not be parsed; counted as predicted-normal.
    pub n_unparsable: u64,
}

impl Add for ConfusionTable {
    type Output = ConfusionTable;

    fn add(mut self, o: Self) -> Self {
        for (a, b) in self.per_class.iter_mut().zip(o.per_class) {
            *a += b;
        }
        self.artifact += o.artifact;
        self.n_pairs += o.n_pairs;
        self.n_unparsable += o.n_unparsable;
        self
    }
}

impl ConfusionTable {
    pub fn class(&self, l2: L2Label) -> ConfusionCounts {
        self.per_class[l2.index()]
    }
}

/// Adds one `(gt, pred)` pair. `None` marks an unparsable prediction.
pub fn accumulate(gt: &LabelSet, pred: Option<&LabelSet>, acc: &mut ConfusionTable) {
    let normal = LabelSet::normal();
    let p = pred.unwrap_or(&normal);
    for l2 in L2Label::ALL {
        acc.per_class[l2.index()].observe(gt.has(l2), p.has(l2));
    }
    acc.artifact.observe(!gt.normal, !p.normal);
    acc.n_pairs += 1;
    if pred.is_none() {
        acc.n_unparsable += 1;
    }
}

pub fn confusion(pairs: &[(LabelSet, Option<LabelSet>)], exec: Exec) -> ConfusionTable {
    exec.fold(
        pairs,
        ConfusionTable::default,
        |mut acc, (gt, pred)| {
            accumulate(gt, pred.as_ref(), &mut acc);
            acc
        },
        |a, b| a + b,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Keyed by L2 name, all six classes.
    pub per_class: BTreeMap<String, Prf>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub micro: Prf,
    pub artifact_binary: Prf,
    pub n_pairs: u64,
    pub n_unparsable: u64,
}

pub fn report_from_table(t: &ConfusionTable) -> MetricsReport {
    let per_class = L2Label::ALL
        .into_iter()
        .map(|l| (l.name().to_string(), prf(t.class(l))))
        .collect();

    let main: Vec<Prf> = L2Label::MAIN.iter().map(|l| prf(t.class(*l))).collect();
    let c = main.len() as f64;
    let macro_avg = Prf {
        precision: main.iter().map(|m| m.precision).sum::<f64>() / c,
        recall: main.iter().map(|m| m.recall).sum::<f64>() / c,
        f1: main.iter().map(|m| m.f1).sum::<f64>() / c,
    };
    let pooled = L2Label::MAIN
        .iter()
        .fold(ConfusionCounts::default(), |acc, l| acc + t.class(*l));

    MetricsReport {
        per_class,
        macro_avg,
        micro: prf(pooled),
        artifact_binary: prf(t.artifact),
        n_pairs: t.n_pairs,
        n_unparsable: t.n_unparsable,
    }
}

pub fn report(pairs: &[(LabelSet, Option<LabelSet>)], exec: Exec) -> MetricsReport {
    report_from_table(&confusion(pairs, exec))
}

impl MetricsReport {
    /// CSV with the comparison-table layout: one header row, one data row.
    /// Macro, micro and artifact blocks first, then the four main classes.
    pub fn to_csv(&self, model: &str) -> String {
        let mut header = vec!["Model".to_string()];
        let mut row = vec![model.to_string()];
        let mut push = |name: &str, m: &Prf| {
            for (metric, v) in [
                ("Precision", m.precision),
                ("Recall", m.recall),
                ("F1", m.f1),
            ] {
                header.push(format!("{name} {metric}"));
                row.push(format!("{v:.4}"));
            }
        };
        push("L2 Labels Macro Average", &self.macro_avg);
        push("L2 Labels Micro Average", &self.micro);
        push("Artifacts", &self.artifact_binary);
        for l in L2Label::MAIN {
            push(l.name(), &self.per_class[l.name()]);
        }
        let quote = |s: &String| {
            if s.contains(',') || s.contains('"') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.clone()
            }
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}",
            header.iter().map(quote).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(
            out,
            "{}",
            row.iter().map(quote).collect::<Vec<_>>().join(",")
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::L3Label;

    fn set(labels: &[L2Label]) -> LabelSet {
        if labels.is_empty() {
            return LabelSet::normal();
        }
        LabelSet::artifact(labels.iter().map(|&l| {
            let kids = l.children().first().map(|c| vec![*c]).unwrap_or_default();
            (l, kids)
        }))
    }

    #[test]
    fn prf_examples() {
        let p = prf(ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 2,
        });
        assert!((p.precision - 0.6667).abs() < 1e-4);
        assert!((p.recall - 0.5).abs() < 1e-12);
        assert!((p.f1 - 0.5714).abs() < 1e-4);
        let p = prf(ConfusionCounts {
            tp: 2,
            fp: 1,
            fn_: 1,
        });
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(prf(ConfusionCounts::default()), Prf::default());
        assert_eq!(
            prf(ConfusionCounts {
                tp: 5,
                fp: 0,
                fn_: 0
            }),
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn accumulate_examples() {
        use L2Label::*;
        let mut t = ConfusionTable::default();
        accumulate(
            &set(&[AbnormalHumanAnatomy]),
            Some(&set(&[AbnormalHumanAnatomy])),
            &mut t,
        );
        assert_eq!(
            t.class(AbnormalHumanAnatomy),
            ConfusionCounts {
                tp: 1,
                fp: 0,
                fn_: 0
            }
        );
        assert_eq!(t.artifact.tp, 1);

        let mut t = ConfusionTable::default();
        accumulate(
            &set(&[AbnormalHumanAnatomy]),
            Some(&set(&[AbnormalObjectMorphology])),
            &mut t,
        );
        assert_eq!(t.class(AbnormalHumanAnatomy).fn_, 1);
        assert_eq!(t.class(AbnormalObjectMorphology).fp, 1);
        assert_eq!(
            t.artifact,
            ConfusionCounts {
                tp: 1,
                fp: 0,
                fn_: 0
            }
        );

        let mut t = ConfusionTable::default();
        accumulate(&LabelSet::normal(), Some(&LabelSet::normal()), &mut t);
        assert_eq!(t.artifact, ConfusionCounts::default());
        assert!(t.per_class.iter().all(|c| *c == ConfusionCounts::default()));
        assert_eq!(t.n_pairs, 1);
    }

    #[test]
    fn unparsable_counts_as_normal() {
        let mut t = ConfusionTable::default();
        accumulate(&set(&[L2Label::AbnormalHumanAnatomy]), None, &mut t);
        assert_eq!(t.artifact.fn_, 1);
        assert_eq!(t.n_unparsable, 1);
    }

    #[test]
    fn macro_and_micro() {
        // Interaction F1 0.5 (tp1 fp1 fn1), Human F1 1.0, Animal/Object 0
        let mut t = ConfusionTable::default();
        t.per_class[L2Label::IrrationalElementInteraction.index()] = ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 1,
        };
        t.per_class[L2Label::AbnormalHumanAnatomy.index()] = ConfusionCounts {
            tp: 3,
            fp: 0,
            fn_: 0,
        };
        let r = report_from_table(&t);
        assert!((r.macro_avg.f1 - 0.375).abs() < 1e-12);

        let mut t = ConfusionTable::default();
        t.per_class[L2Label::IrrationalElementInteraction.index()] = ConfusionCounts {
            tp: 1,
            fp: 0,
            fn_: 1,
        };
        t.per_class[L2Label::AbnormalHumanAnatomy.index()] = ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 0,
        };
        let r = report_from_table(&t);
        assert!((r.micro.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.micro.recall - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_pairs() {
        use L2Label::*;
        let pairs: Vec<_> = [
            set(&[AbnormalHumanAnatomy]),
            set(&[AbnormalHumanAnatomy, IrrationalElementInteraction]),
            LabelSet::normal(),
        ]
        .into_iter()
        .map(|s| (s.clone(), Some(s)))
        .collect();
        let r = report(&pairs, Exec::Sequential);
        assert_eq!(
            r.micro,
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
        assert_eq!(r.artifact_binary.f1, 1.0);
        // Animal and Object absent -> 0 under the zero convention
        assert!((r.macro_avg.f1 - 0.5).abs() < 1e-12);
        assert_eq!(r.per_class[AbnormalHumanAnatomy.name()].f1, 1.0);
    }

    #[test]
    fn rare_classes_reported_not_averaged() {
        let gt = LabelSet::artifact([(L2Label::OtherIrrationalities, vec![])]);
        let r = report(&[(gt.clone(), Some(gt))], Exec::Sequential);
        assert_eq!(r.per_class[L2Label::OtherIrrationalities.name()].f1, 1.0);
        assert_eq!(r.macro_avg, Prf::default());
        assert_eq!(r.micro, Prf::default());
    }

    #[test]
    fn csv_layout() {
        let s = LabelSet::artifact([(
            L2Label::AbnormalHumanAnatomy,
            vec![L3Label::HandStructureDeformity],
        )]);
        let csv = report(&[(s.clone(), Some(s))], Exec::Sequential).to_csv("m");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Model,L2 Labels Macro Average Precision"));
        assert_eq!(lines[0].split(',').count(), 1 + 3 * 7);
        assert_eq!(lines[1].split(',').count(), 1 + 3 * 7);
    }
}
