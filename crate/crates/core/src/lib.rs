//! Evaluation toolkit for image-artifact assessors.
//!
//! - [`taxonomy`]: the fixed three-level artifact taxonomy and label sets
//! - [`parser`]: `<think>` / `boxed{}` response parsing and canonical rendering
//! - [`reward`]: multi-level GRPO reward and group advantages
//! - [`dataset`] and [`sampler`]: annotation records and 4:1:1:1:1 batch sampling
//! - [`metrics`]: per-class, macro and micro precision/recall/F1
//! - [`bench`]: subject verification, assessment and category scoring
//! - [`gateway`]: HTTP and mock transports for assessor, verifier and judge

pub mod bench;
pub mod dataset;
pub mod exec;
pub mod gateway;
pub mod metrics;
pub mod parser;
pub mod reward;
pub mod sampler;
pub mod taxonomy;

pub use exec::Exec;
pub use parser::{parse_response, render_answer, ParsedResponse};
pub use reward::{
    final_reward, group_advantages, multilabel_reward, RewardBreakdown, RewardWeights,
};
pub use taxonomy::{canonical_taxonomy, L2Entry, L2Label, L3Label, LabelSet};
