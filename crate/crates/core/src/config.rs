//! Scorer selection and decoding hyper-parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which scoring rule drives the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    /// Plain beam search ranked by log-probability, final length norm `len^a`.
    Beam,
    /// Global-aware scoring: attention score plus step-wise length reward.
    Global,
    /// GNMT coverage penalty applied when re-ranking finished hypotheses.
    CoverageGnmt,
    /// Truncated coverage penalty applied when re-ranking finished hypotheses.
    CoverageTrunc,
    /// Step-wise coverage term added to every expansion.
    CoverageStep,
    /// Bottom-up overlap penalty, applied step-wise.
    BottomUp,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 6] = [
        ScorerKind::Beam,
        ScorerKind::Global,
        ScorerKind::CoverageGnmt,
        ScorerKind::CoverageTrunc,
        ScorerKind::CoverageStep,
        ScorerKind::BottomUp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Beam => "beam",
            ScorerKind::Global => "global",
            ScorerKind::CoverageGnmt => "coverage-gnmt",
            ScorerKind::CoverageTrunc => "coverage-trunc",
            ScorerKind::CoverageStep => "coverage-step",
            ScorerKind::BottomUp => "bottom-up",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scorer {s:?}")))
    }
}

/// Decoding configuration shared by every engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub scorer: ScorerKind,
    /// Weight of the attention term relative to log-probability.
    pub beta: f64,
    /// Weight of the length reward inside the attention term.
    pub gamma: f64,
    /// Length-normalization exponent `a`; ignored by the global scorer.
    pub length_penalty: f64,
    pub beam_size: usize,
    /// CTRL-style repetition penalty, applied when set.
    pub repetition_theta: Option<f64>,
    pub block_length: Option<usize>,
    /// Step cap. Defaults to `ceil(3 Z)`.
    pub max_steps: Option<usize>,
    /// Hard minimum length; end-of-sequence is disallowed before it.
    pub min_length: Option<usize>,
    /// Floor applied to attention scores before taking logs.
    pub attention_floor: f64,
    /// Threshold of the truncated coverage penalty.
    pub coverage_truncation: f64,
    /// Replace the constant coverage threshold 1 by the per-token global attention.
    pub coverage_uses_global: bool,
    /// Record per-step beam snapshots in the decode result.
    pub trace: bool,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            scorer: ScorerKind::Global,
            beta: 12.0,
            gamma: 1.0,
            length_penalty: 1.0,
            beam_size: 4,
            repetition_theta: None,
            block_length: None,
            max_steps: None,
            min_length: None,
            attention_floor: 1e-12,
            coverage_truncation: 2.0,
            coverage_uses_global: false,
            trace: false,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn new(scorer: ScorerKind) -> Self {
        ScorerConfig {
            scorer,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.beam_size == 0 {
            return fail("beam size must be at least 1");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return fail("beta must be a finite non-negative number");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return fail("gamma must be a finite non-negative number");
        }
        if !self.length_penalty.is_finite() {
            return fail("length penalty must be finite");
        }
        if let Some(theta) = self.repetition_theta {
            if !(theta.is_finite() && theta >= 1.0) {
                return fail("repetition theta must be >= 1");
            }
        }
        if self.block_length == Some(0) {
            return fail("block length must be at least 1");
        }
        if self.max_steps == Some(0) {
            return fail("max steps must be at least 1");
        }
        if self.attention_floor.is_nan() || self.attention_floor <= 0.0 {
            return fail("attention floor must be positive");
        }
        if self.coverage_truncation.is_nan() || self.coverage_truncation <= 0.0 {
            return fail("coverage truncation must be positive");
        }
        if let (Some(min), Some(max)) = (self.min_length, self.max_steps) {
            if min > max {
                return fail("min length exceeds max steps");
            }
        }
        Ok(())
    }

    /// The step cap for a target of optimal length `z`.
    pub fn resolved_max_steps(&self, z: f64) -> usize {
        self.max_steps
            .unwrap_or_else(|| ((3.0 * z).ceil() as usize).max(1))
    }
}
