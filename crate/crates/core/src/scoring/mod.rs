//! Scoring functions for every decoder in the crate.

mod baseline;
mod global;
mod repetition;

pub use baseline::{baseline_penalty, baseline_penalty_floored, PenaltyInput, PenaltyKind};
pub use global::{
    attention_score, attention_score_raw, final_hypothesis_score, joint_step_update,
    length_normalized_score, overshoot, step_bonus, step_length_reward,
};
pub use repetition::{penalize_logprobs, repetition_penalty};
