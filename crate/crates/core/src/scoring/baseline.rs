//! Coverage-style penalty terms used by earlier attention-aware decoders,
//! for side-by-side comparison with the global scoring mechanism.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A penalty family member. `thresholds`, when present, replaces the
/// constant per-token threshold (1, or the truncation value) with a
/// per-token vector, typically the global attention distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PenaltyKind {
    /// `Σ ln min(c_i, θ_i)` with θ_i = 1 by default.
    Gnmt { thresholds: Option<Vec<f64>> },
    /// `Σ ln min(c_i, β')`.
    Truncated {
        beta: f64,
        thresholds: Option<Vec<f64>>,
    },
    /// `−Σ min(α_{t,i}, l_{t−1,i})`.
    StepwiseSee,
    /// `1 − Σ min(α_{t,i}, l_{t−1,i})`.
    StepwiseLi,
    /// `n − Σ max(c_i, θ_i)` with θ_i = 1 by default.
    BottomUp { thresholds: Option<Vec<f64>> },
}

impl PenaltyKind {
    fn name(&self) -> &'static str {
        match self {
            PenaltyKind::Gnmt { .. } => "gnmt",
            PenaltyKind::Truncated { .. } => "truncated",
            PenaltyKind::StepwiseSee => "stepwise-see",
            PenaltyKind::StepwiseLi => "stepwise-li",
            PenaltyKind::BottomUp { .. } => "bottom-up",
        }
    }
}

/// What a penalty is evaluated on.
#[derive(Debug, Clone, Copy)]
pub enum PenaltyInput<'a> {
    /// Column sums `c_i = Σ_t α_{t,i}` of a (partial or finished) hypothesis.
    Terminal { column_sums: &'a [f64] },
    /// The current attention row and the ledger accumulated before it.
    Step { row: &'a [f64], previous: &'a [f64] },
}

/// Evaluates one penalty. Logarithms of zero evaluate to `-inf`; callers
/// that need a finite value floor the argument themselves via
/// [`baseline_penalty_floored`].
pub fn baseline_penalty(kind: &PenaltyKind, input: PenaltyInput<'_>) -> Result<f64> {
    baseline_penalty_floored(kind, input, 0.0)
}

/// [`baseline_penalty`] with `ln` arguments floored at `floor`.
pub fn baseline_penalty_floored(
    kind: &PenaltyKind,
    input: PenaltyInput<'_>,
    floor: f64,
) -> Result<f64> {
    let wrong = || Error::WrongInputShape { kind: kind.name() };
    match (kind, input) {
        (PenaltyKind::Gnmt { thresholds }, PenaltyInput::Terminal { column_sums }) => {
            let th = thresholds_or(thresholds.as_deref(), 1.0, column_sums.len())?;
            Ok(column_sums
                .iter()
                .zip(th)
                .map(|(c, t)| c.min(t).max(floor).ln())
                .sum())
        }
        (PenaltyKind::Truncated { beta, thresholds }, PenaltyInput::Terminal { column_sums }) => {
            let th = thresholds_or(thresholds.as_deref(), *beta, column_sums.len())?;
            Ok(column_sums
                .iter()
                .zip(th)
                .map(|(c, t)| c.min(t).max(floor).ln())
                .sum())
        }
        (PenaltyKind::BottomUp { thresholds }, PenaltyInput::Terminal { column_sums }) => {
            let th = thresholds_or(thresholds.as_deref(), 1.0, column_sums.len())?;
            let n = column_sums.len() as f64;
            Ok(n - column_sums
                .iter()
                .zip(th)
                .map(|(c, t)| c.max(t))
                .sum::<f64>())
        }
        (PenaltyKind::StepwiseSee, PenaltyInput::Step { row, previous }) => {
            Ok(-overlap(row, previous)?)
        }
        (PenaltyKind::StepwiseLi, PenaltyInput::Step { row, previous }) => {
            Ok(1.0 - overlap(row, previous)?)
        }
        _ => Err(wrong()),
    }
}

fn overlap(row: &[f64], previous: &[f64]) -> Result<f64> {
    if row.len() != previous.len() {
        return Err(Error::LengthMismatch {
            expected: previous.len(),
            actual: row.len(),
        });
    }
    Ok(row.iter().zip(previous).map(|(a, p)| a.min(*p)).sum())
}

fn thresholds_or(thresholds: Option<&[f64]>, constant: f64, n: usize) -> Result<Vec<f64>> {
    match thresholds {
        Some(th) if th.len() != n => Err(Error::LengthMismatch {
            expected: n,
            actual: th.len(),
        }),
        Some(th) if th.iter().any(|t| t.is_nan() || *t < 0.0) => Err(Error::InvalidConfig(
            "penalty thresholds must be non-negative".into(),
        )),
        Some(th) => Ok(th.to_vec()),
        None => Ok(vec![constant; n]),
    }
}
