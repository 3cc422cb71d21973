//! Partial and finished output sequences.

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionLedger, Token};

/// What one decoding step contributed to a hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub token: Token,
    /// Log-probability of `token` as used for ranking (after any overlay).
    pub logp: f64,
    /// Attention score of the prefix at this step, when the scorer uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_score: Option<f64>,
    /// Step-wise length reward, when the scorer uses one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_reward: Option<f64>,
    /// Amount added to the joint score.
    pub contribution: f64,
}

/// A candidate output sequence. The start token is implicit: it carries no
/// probability factor and no attention row, so `tokens` holds only the
/// generated tokens (the end-of-sequence token included once emitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<Token>,
    pub logprob: f64,
    pub joint: f64,
    pub ledger: AttentionLedger,
    pub steps: Vec<StepRecord>,
    pub finished: bool,
    /// Set when the end-of-sequence token was appended by the step cap
    /// rather than chosen by the search.
    pub forced: bool,
}

impl Hypothesis {
    /// The start-only hypothesis for a source of length `n`.
    pub fn root(n: usize) -> Self {
        Hypothesis {
            tokens: Vec::new(),
            logprob: 0.0,
            joint: 0.0,
            ledger: AttentionLedger::zeros(n),
            steps: Vec::new(),
            finished: false,
            forced: false,
        }
    }

    /// Generated length, `|y| - 1` in start-inclusive terms.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Generated tokens without the trailing end-of-sequence marker.
    pub fn content(&self) -> &[Token] {
        if self.finished {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }

    pub(crate) fn extend(
        &self,
        record: StepRecord,
        ledger: AttentionLedger,
        finished: bool,
    ) -> Self {
        let mut tokens = Vec::with_capacity(self.tokens.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.push(record.token);
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.extend_from_slice(&self.steps);
        let logprob = self.logprob + record.logp;
        let joint = self.joint + record.contribution;
        steps.push(record);
        Hypothesis {
            tokens,
            logprob,
            joint,
            ledger,
            steps,
            finished,
            forced: false,
        }
    }

    /// Joint score summed afresh from the step records.
    pub fn recomputed_joint(&self) -> f64 {
        self.steps.iter().map(|s| s.contribution).sum()
    }

    pub fn recomputed_logprob(&self) -> f64 {
        self.steps.iter().map(|s| s.logp).sum()
    }

    /// Product of the per-step attention scores, if every step recorded one.
    pub fn attention_product(&self) -> Option<f64> {
        self.steps.iter().map(|s| s.attention_score).product()
    }
}
