//! CTRL-style repetition penalty.

use crate::attention::Token;

/// Penalizes tokens already generated: positive scores are divided by
/// `theta`, negative scores multiplied by it. Other entries pass through.
pub fn repetition_penalty(logits: &[f64], generated: &[Token], theta: f64) -> Vec<f64> {
    let mut out = logits.to_vec();
    if theta == 1.0 {
        return out;
    }
    let mut seen = vec![false; logits.len()];
    for t in generated {
        if let Some(flag) = seen.get_mut(t.index()) {
            *flag = true;
        }
    }
    for (x, _) in out.iter_mut().zip(&seen).filter(|(_, s)| **s) {
        *x = if *x > 0.0 { *x / theta } else { *x * theta };
    }
    out
}

/// Repetition penalty applied to log-probabilities, renormalized so the
/// result is again a log distribution.
pub fn penalize_logprobs(logprobs: &[f64], generated: &[Token], theta: f64) -> Vec<f64> {
    if theta == 1.0 || generated.is_empty() {
        return logprobs.to_vec();
    }
    let raw = repetition_penalty(logprobs, generated, theta);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + raw.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    raw.iter().map(|x| x - lse).collect()
}
