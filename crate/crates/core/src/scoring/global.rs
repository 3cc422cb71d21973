//! The global scoring mechanism: attention score, step-wise length reward,
//! joint-score update and final selection score, plus the length-normalized
//! score of plain beam search.

use std::f64::consts::SQRT_2;

use crate::attention::{AttentionLedger, GlobalAttention};
use crate::error::{Error, Result};
use crate::hypothesis::Hypothesis;

/// Fraction of the attention paid so far that stays within the global
/// budget: `Σ_i min(l_i, g_i) / ζ`.
///
/// Equivalently `1 − Δ/ζ`, where `Δ` is the total overshoot over the
/// tokens whose local attention exceeds their global attention; the score
/// therefore lies in `[0, 1]` and falls as the overshoot grows.
pub fn attention_score(ledger: &AttentionLedger, g: &GlobalAttention) -> Result<f64> {
    attention_score_raw(ledger.local(), ledger.total(), g.values())
}

/// [`attention_score`] over bare slices, for callers holding an arbitrary
/// local vector and total.
pub fn attention_score_raw(local: &[f64], total: f64, global: &[f64]) -> Result<f64> {
    if local.len() != global.len() {
        return Err(Error::LengthMismatch {
            expected: global.len(),
            actual: local.len(),
        });
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::EmptyLedger);
    }
    let within: f64 = local.iter().zip(global).map(|(l, g)| l.min(*g)).sum();
    // rows sum to one only up to rounding, so `within` can exceed `total` by an ulp
    Ok((within / total).min(1.0))
}

/// Total overshoot `Δ = Σ_{s : l_s > g_s} (l_s − g_s)`.
pub fn overshoot(local: &[f64], global: &[f64]) -> f64 {
    local
        .iter()
        .zip(global)
        .filter(|(l, g)| l > g)
        .map(|(l, g)| l - g)
        .sum()
}

/// Step-wise length reward `−|t − Z/√2 − 0.5| / Z`.
///
/// Its running mean over steps `1..=j` peaks at `j ≈ Z`, so accumulating it
/// into the joint score and dividing by the final length rewards hypotheses
/// whose length is close to the optimal one.
pub fn step_length_reward(t: usize, z: f64) -> Result<f64> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::NonPositiveZ(z));
    }
    Ok(-(t as f64 - z / SQRT_2 - 0.5).abs() / z)
}

/// One incremental joint-score update:
/// `J_prev + logp + β (ln max(A, A_floor) + γ R)`.
pub fn joint_step_update(
    j_prev: f64,
    logp: f64,
    a: f64,
    r: f64,
    beta: f64,
    gamma: f64,
    a_floor: f64,
) -> f64 {
    j_prev + logp + step_bonus(a, r, beta, gamma, a_floor)
}

/// The part of [`joint_step_update`] that does not depend on the token.
pub fn step_bonus(a: f64, r: f64, beta: f64, gamma: f64, a_floor: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    beta * (a.max(a_floor).ln() + gamma * r)
}

/// Final selection score of a global-aware hypothesis: `J / generated length`.
pub fn final_hypothesis_score(h: &Hypothesis) -> Result<f64> {
    if !h.finished {
        return Err(Error::Unfinished);
    }
    if h.is_empty() {
        return Err(Error::ZeroLength);
    }
    Ok(h.joint / h.len() as f64)
}

/// `logprob / length^a`.
pub fn length_normalized_score(logprob: f64, length: usize, a: f64) -> f64 {
    if a == 0.0 {
        return logprob;
    }
    logprob / (length as f64).powf(a)
}
