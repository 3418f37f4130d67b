//! Multi-level reward for GRPO training of the assessor.
//!
//! Components: format `r0`, binary verdict `r1`, L2 and L3 label agreement
//! `r2`/`r3`, and the consistency gate `r_c`. The final reward is
//! `r_c * (8*r0 + 4*r1 + 2*r2 + 1*r3)` with the default weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::gateway::{GatewayError, JudgePort};
use crate::parser::{render_answer, ParsedResponse};
use crate::taxonomy::{diff_labels, DiffLevel, LabelSet};

/// Default standard-deviation floor below which a group is degenerate.
pub const ADVANTAGE_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("consistency judge failed: {0}")]
    Judge(#[from] GatewayError),
    #[error("a reward group needs at least 2 members, got {0}")]
    GroupTooSmall(usize),
    #[error("reward group contains a non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    /// Weights of `r0..r3`.
    pub level_weights: [f64; 4],
    pub correct_coef: f64,
    pub error_coef: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            level_weights: [8.0, 4.0, 2.0, 1.0],
            correct_coef: 0.6,
            error_coef: 0.3,
        }
    }
}

impl RewardWeights {
    pub fn max_reward(&self) -> f64 {
        self.level_weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_c: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    #[serde(rename = "final")]
    pub final_reward: f64,
}

impl RewardBreakdown {
    /// Combines components into the final gated weighted sum.
    pub fn compose(r_c: f64, levels: [f64; 4], w: &RewardWeights) -> Self {
        let weighted: f64 = levels
            .iter()
            .zip(w.level_weights.iter())
            .map(|(r, k)| r * k)
            .sum();
        RewardBreakdown {
            r_c,
            r0: levels[0],
            r1: levels[1],
            r2: levels[2],
            r3: levels[3],
            final_reward: r_c * weighted,
        }
    }
}

pub fn format_reward(p: &ParsedResponse) -> f64 {
    if p.format_ok {
        1.0
    } else {
        0.0
    }
}

pub fn l1_reward(gt: &LabelSet, pred: &LabelSet) -> f64 {
    if gt.normal == pred.normal {
        1.0
    } else {
        0.0
    }
}

/// Label agreement at L2 or L3.
///
/// Exact match of a non-empty ground truth scores 1; an empty prediction
/// against a non-empty ground truth scores 0; empty against empty scores 1.
/// Otherwise `clamp(0.6*correct - 0.3*(miss + extra), 0, 1)`.
pub fn multilabel_reward(
    gt: &LabelSet,
    pred: &LabelSet,
    level: DiffLevel,
    w: &RewardWeights,
) -> f64 {
    let d = diff_labels(gt, pred, level);
    let gt_len = d.gt_len();
    let pred_len = d.pred_len();
    if gt_len > 0 && d.n_miss == 0 && d.n_extra == 0 {
        return 1.0;
    }
    if gt_len > 0 && pred_len == 0 {
        return 0.0;
    }
    if gt_len == 0 && pred_len == 0 {
        return 1.0;
    }
    let raw = w.correct_coef * d.n_correct as f64 - w.error_coef * (d.n_miss + d.n_extra) as f64;
    raw.clamp(0.0, 1.0)
}

/// Asks the judge whether the reasoning supports the answer. Malformed
/// responses score 0 without a judge call.
pub fn consistency_reward<J: JudgePort + ?Sized>(
    p: &ParsedResponse,
    judge: &J,
) -> Result<f64, RewardError> {
    let Some(answer) = p.valid_answer() else {
        return Ok(0.0);
    };
    // valid_answer implies the set validates, so rendering cannot fail
    let rendered = render_answer(answer).unwrap_or_default();
    let consistent = judge.judge(&p.think, &rendered)?;
    Ok(if consistent { 1.0 } else { 0.0 })
}

/// Label components `[r0, r1, r2, r3]` without the consistency gate.
pub fn level_rewards(gt: &LabelSet, p: &ParsedResponse, w: &RewardWeights) -> [f64; 4] {
    match p.valid_answer() {
        Some(pred) => [
            1.0,
            l1_reward(gt, pred),
            multilabel_reward(gt, pred, DiffLevel::L2, w),
            multilabel_reward(gt, pred, DiffLevel::L3, w),
        ],
        None => [0.0; 4],
    }
}

pub fn final_reward<J: JudgePort + ?Sized>(
    gt: &LabelSet,
    p: &ParsedResponse,
    judge: &J,
    w: &RewardWeights,
) -> Result<RewardBreakdown, RewardError> {
    let levels = level_rewards(gt, p, w);
    let r_c = consistency_reward(p, judge)?;
    Ok(RewardBreakdown::compose(r_c, levels, w))
}

/// Scores many `(ground truth, response)` pairs, at most `max_inflight`
/// judge calls at a time. Output order follows input order.
pub fn final_rewards_batch<J: JudgePort + Sync + ?Sized>(
    pairs: &[(LabelSet, ParsedResponse)],
    judge: &J,
    w: &RewardWeights,
    exec: Exec,
    max_inflight: usize,
) -> Vec<Result<RewardBreakdown, RewardError>> {
    exec.map_bounded(pairs, max_inflight, |(gt, p)| final_reward(gt, p, judge, w))
}

/// Group-normalized advantages `(R_i - mean) / std` with the population
/// standard deviation. Degenerate groups (`std < eps`) yield zeros.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, RewardError> {
    group_advantages_eps(rewards, ADVANTAGE_EPS)
}

pub fn group_advantages_eps(rewards: &[f64], eps: f64) -> Result<Vec<f64>, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall(rewards.len()));
    }
    if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(RewardError::NonFinite(i));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < eps {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{always_consistent_judge, FnPort, PortRequest, PortResponse};
    use crate::parser::{parse_response, wrap_response};
    use crate::taxonomy::{L2Label as L2, L3Label as L3};

    fn human(l3: Vec<L3>) -> (L2, Vec<L3>) {
        (L2::AbnormalHumanAnatomy, l3)
    }

    #[test]
    fn multilabel_examples() {
        let w = RewardWeights::default();
        let a = (L2::AbnormalObjectMorphology, vec![]);
        let b = (L2::OtherIrrationalities, vec![]);
        let c = human(vec![L3::HandStructureDeformity]);
        let gt_a = LabelSet::artifact([a.clone()]);
        let gt_ab = LabelSet::artifact([a.clone(), b.clone()]);
        let r = |g: &LabelSet, p: &LabelSet| multilabel_reward(g, p, DiffLevel::L2, &w);

        assert_eq!(r(&gt_a, &gt_a), 1.0);
        assert!((r(&gt_ab, &gt_a) - 0.3).abs() < 1e-12);
        let abc = LabelSet::artifact([a, b, c]);
        assert!((r(&gt_ab, &abc) - 0.9).abs() < 1e-12);
        assert_eq!(r(&gt_a, &LabelSet::normal()), 0.0);
        assert_eq!(r(&LabelSet::normal(), &LabelSet::normal()), 1.0);
        assert_eq!(r(&LabelSet::normal(), &gt_a), 0.0);
    }

    #[test]
    fn l1_examples() {
        let h = LabelSet::artifact([human(vec![L3::HandStructureDeformity])]);
        let o = LabelSet::artifact([(L2::AbnormalObjectMorphology, vec![])]);
        assert_eq!(l1_reward(&LabelSet::normal(), &LabelSet::normal()), 1.0);
        assert_eq!(l1_reward(&h, &LabelSet::normal()), 0.0);
        assert_eq!(l1_reward(&h, &o), 1.0);
    }

    #[test]
    fn format_examples() {
        let ok = parse_response(&wrap_response("fine", &LabelSet::normal()).unwrap());
        assert_eq!(format_reward(&ok), 1.0);
        let wrong_parent = parse_response(
            r#"<think>x</think> boxed{{"Whether Normal": False, "Type of Abnormality": {"L2: Abnormal Human Anatomy": ["L3: Abnormal Head Structure"]}}}"#,
        );
        assert_eq!(format_reward(&wrong_parent), 0.0);
        assert_eq!(
            format_reward(&parse_response("<think>x</think> nothing")),
            0.0
        );
    }

    #[test]
    fn consistency_short_circuits() {
        let judge = always_consistent_judge();
        let bad = parse_response("no think, no answer");
        assert_eq!(consistency_reward(&bad, &judge).unwrap(), 0.0);
        assert!(judge.calls().is_empty());
        let good = parse_response(&wrap_response("fine", &LabelSet::normal()).unwrap());
        assert_eq!(consistency_reward(&good, &judge).unwrap(), 1.0);
        assert_eq!(judge.calls().len(), 1);
    }

    #[test]
    fn consistency_keyed_judge() {
        // consistent iff every predicted L2 name appears in the reasoning
        let judge = FnPort::new(|req: &PortRequest| match req {
            PortRequest::Judge { think, answer } => {
                let ok = crate::parser::parse_answer(answer)
                    .map(|s| s.l2.keys().all(|k| think.contains(k.name())))
                    .unwrap_or(false);
                Ok(PortResponse::Judge { consistent: ok })
            }
            _ => unreachable!(),
        });
        let set = LabelSet::artifact([(L2::AbnormalObjectMorphology, vec![])]);
        let mentions = parse_response(
            &wrap_response("The cup shows L2: Abnormal Object Morphology.", &set).unwrap(),
        );
        let omits = parse_response(&wrap_response("The cup looks odd.", &set).unwrap());
        assert_eq!(consistency_reward(&mentions, &judge).unwrap(), 1.0);
        assert_eq!(consistency_reward(&omits, &judge).unwrap(), 0.0);
    }

    #[test]
    fn judge_failure_surfaces() {
        let judge = FnPort::new(|_r: &PortRequest| {
            Err(GatewayError::Transport {
                attempts: 3,
                last_status: Some(503),
                message: "down".into(),
            })
        });
        let good = parse_response(&wrap_response("fine", &LabelSet::normal()).unwrap());
        let err = final_reward(
            &LabelSet::normal(),
            &good,
            &judge,
            &RewardWeights::default(),
        );
        assert!(matches!(err, Err(RewardError::Judge(_))));
    }

    #[test]
    fn final_examples() {
        let w = RewardWeights::default();
        let gt = LabelSet::artifact([human(vec![L3::HandStructureDeformity])]);
        let resp = parse_response(&wrap_response("hand has six fingers", &gt).unwrap());
        let perfect = final_reward(&gt, &resp, &always_consistent_judge(), &w).unwrap();
        assert_eq!(perfect.final_reward, 15.0);

        let rejecting =
            FnPort::new(|_r: &PortRequest| Ok(PortResponse::Judge { consistent: false }));
        let gated = final_reward(&gt, &resp, &rejecting, &w).unwrap();
        assert_eq!(gated.final_reward, 0.0);
        assert_eq!(gated.r0, 1.0);

        let b = RewardBreakdown::compose(1.0, [1.0, 1.0, 0.3, 0.0], &w);
        assert!((b.final_reward - 12.6).abs() < 1e-12);

        // artifact ground truth predicted normal: only r0 survives
        let normal = parse_response(&wrap_response("all fine", &LabelSet::normal()).unwrap());
        let r = final_reward(&gt, &normal, &always_consistent_judge(), &w).unwrap();
        assert_eq!(
            (r.r0, r.r1, r.r2, r.r3, r.final_reward),
            (1.0, 0.0, 0.0, 0.0, 8.0)
        );

        let broken = parse_response("garbage");
        let r = final_reward(&gt, &broken, &always_consistent_judge(), &w).unwrap();
        assert_eq!(r, RewardBreakdown::compose(0.0, [0.0; 4], &w));
    }

    #[test]
    fn advantages() {
        assert_eq!(
            group_advantages(&[0.0, 0.0, 2.0, 2.0]).unwrap(),
            vec![-1.0, -1.0, 1.0, 1.0]
        );
        assert_eq!(group_advantages(&[5.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            group_advantages(&[1.0]),
            Err(RewardError::GroupTooSmall(1))
        ));
        assert!(matches!(
            group_advantages(&[1.0, f64::NAN]),
            Err(RewardError::NonFinite(1))
        ));
    }

    #[test]
    fn breakdown_serializes_final_key() {
        let b = RewardBreakdown::compose(1.0, [1.0; 4], &RewardWeights::default());
        let v = serde_json::to_value(b).unwrap();
        assert_eq!(v["final"], 15.0);
    }
}
