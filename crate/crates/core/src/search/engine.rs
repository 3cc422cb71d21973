//! Step scoring shared by the beam engine and the exhaustive oracle, so that
//! both rank sequences with exactly the same arithmetic.

use std::cmp::Ordering;

use crate::attention::{AttentionLedger, GlobalAttention, SourceDocument, Token};
use crate::config::{ScorerConfig, ScorerKind};
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, StepRecord};
use crate::model::AttentiveModel;
use crate::scoring::{
    attention_score, baseline_penalty_floored, length_normalized_score, penalize_logprobs,
    step_bonus, step_length_reward, PenaltyInput, PenaltyKind,
};

use super::ScoredHypothesis;

/// Supplies the global attention distribution in force at each step.
pub trait AttentionGuide: Sync {
    /// Distribution used by the attention score at step `t` (1-based).
    fn at_step(&self, t: usize) -> &GlobalAttention;

    /// Whole-sequence distribution; its sum is the length target.
    fn whole(&self) -> &GlobalAttention;
}

impl AttentionGuide for GlobalAttention {
    fn at_step(&self, _t: usize) -> &GlobalAttention {
        self
    }

    fn whole(&self) -> &GlobalAttention {
        self
    }
}

/// Everything about one beam's expansion at one step that does not depend
/// on the chosen token.
pub(crate) struct Expansion {
    pub ledger: AttentionLedger,
    pub logprobs: Vec<f64>,
    pub bonus: f64,
    pub attention_score: Option<f64>,
    pub length_reward: Option<f64>,
}

pub(crate) struct StepScorer<'a, M: AttentiveModel + ?Sized, G: AttentionGuide + ?Sized> {
    pub model: &'a M,
    pub source: &'a SourceDocument,
    pub guide: &'a G,
    pub config: &'a ScorerConfig,
    pub eos: Token,
    z: f64,
    thresholds: Option<Vec<f64>>,
}

impl<'a, M: AttentiveModel + ?Sized, G: AttentionGuide + ?Sized> StepScorer<'a, M, G> {
    pub fn new(
        model: &'a M,
        source: &'a SourceDocument,
        guide: &'a G,
        config: &'a ScorerConfig,
    ) -> Result<Self> {
        config.validate()?;
        source.validate()?;
        let eos = model.eos();
        if eos.index() >= model.vocab_size() {
            return Err(Error::NoHypothesis);
        }
        let whole = guide.whole();
        if whole.len() != source.len() {
            return Err(Error::LengthMismatch {
                expected: source.len(),
                actual: whole.len(),
            });
        }
        let z = whole.optimal_length();
        if config.scorer == ScorerKind::Global && (z.is_nan() || z <= 0.0) {
            return Err(Error::NonPositiveZ(z));
        }
        let thresholds = config.coverage_uses_global.then(|| whole.values().to_vec());
        Ok(StepScorer {
            model,
            source,
            guide,
            config,
            eos,
            z,
            thresholds,
        })
    }

    pub fn max_steps(&self) -> usize {
        self.config.resolved_max_steps(self.z)
    }

    pub fn eos_allowed(&self, t: usize) -> bool {
        self.config.min_length.is_none_or(|min| t >= min)
    }

    /// Runs the model on `beam` and computes the token-independent part of
    /// the step. Counts as one attention-score evaluation for the global scorer.
    pub fn expand(&self, beam: &Hypothesis) -> Result<Expansion> {
        let t = beam.len() + 1;
        let out = self.model.step(self.source, &beam.tokens)?;
        out.validate(self.model.vocab_size(), self.source.len())?;
        let logprobs = match self.config.repetition_theta {
            Some(theta) => penalize_logprobs(&out.logprobs, &beam.tokens, theta),
            None => out.logprobs,
        };
        let ledger = beam.ledger.accumulate_unchecked(&out.attention);
        let cfg = self.config;
        let (bonus, attention_score, length_reward) = match cfg.scorer {
            ScorerKind::Global => {
                let g = self.guide.at_step(t);
                if g.len() != ledger.len() {
                    return Err(Error::LengthMismatch {
                        expected: ledger.len(),
                        actual: g.len(),
                    });
                }
                let a = attention_score(&ledger, g)?;
                let r = step_length_reward(t, self.z)?;
                (
                    step_bonus(a, r, cfg.beta, cfg.gamma, cfg.attention_floor),
                    Some(a),
                    Some(r),
                )
            }
            ScorerKind::CoverageStep => {
                let input = PenaltyInput::Step {
                    row: &out.attention,
                    previous: beam.ledger.local(),
                };
                (
                    cfg.beta
                        * baseline_penalty_floored(
                            &PenaltyKind::StepwiseLi,
                            input,
                            cfg.attention_floor,
                        )?,
                    None,
                    None,
                )
            }
            ScorerKind::BottomUp => {
                let kind = PenaltyKind::BottomUp {
                    thresholds: self.thresholds.clone(),
                };
                let before = PenaltyInput::Terminal {
                    column_sums: beam.ledger.local(),
                };
                let after = PenaltyInput::Terminal {
                    column_sums: ledger.local(),
                };
                let delta = baseline_penalty_floored(&kind, after, cfg.attention_floor)?
                    - baseline_penalty_floored(&kind, before, cfg.attention_floor)?;
                (cfg.beta * delta, None, None)
            }
            ScorerKind::Beam | ScorerKind::CoverageGnmt | ScorerKind::CoverageTrunc => {
                (0.0, None, None)
            }
        };
        Ok(Expansion {
            ledger,
            logprobs,
            bonus,
            attention_score,
            length_reward,
        })
    }

    /// Ranking score of appending `token` to a beam with joint score `joint`.
    pub fn candidate_score(joint: f64, exp: &Expansion, token: Token) -> f64 {
        joint + exp.logprobs[token.index()] + exp.bonus
    }

    pub fn child(&self, beam: &Hypothesis, exp: &Expansion, token: Token) -> Hypothesis {
        let logp = exp.logprobs[token.index()];
        let record = StepRecord {
            token,
            logp,
            attention_score: exp.attention_score,
            length_reward: exp.length_reward,
            contribution: logp + exp.bonus,
        };
        beam.extend(record, exp.ledger.clone(), token == self.eos)
    }

    /// Score used to choose among finished hypotheses.
    pub fn final_score(&self, h: &Hypothesis) -> Result<f64> {
        if !h.finished {
            return Err(Error::Unfinished);
        }
        if h.is_empty() {
            return Err(Error::ZeroLength);
        }
        let cfg = self.config;
        let len = h.len();
        let sums = PenaltyInput::Terminal {
            column_sums: h.ledger.local(),
        };
        let score = match cfg.scorer {
            ScorerKind::Global => h.joint / len as f64,
            ScorerKind::Beam => length_normalized_score(h.logprob, len, cfg.length_penalty),
            ScorerKind::CoverageGnmt => {
                let kind = PenaltyKind::Gnmt {
                    thresholds: self.thresholds.clone(),
                };
                length_normalized_score(h.logprob, len, cfg.length_penalty)
                    + cfg.beta * baseline_penalty_floored(&kind, sums, cfg.attention_floor)?
            }
            ScorerKind::CoverageTrunc => {
                let kind = PenaltyKind::Truncated {
                    beta: cfg.coverage_truncation,
                    thresholds: self.thresholds.clone(),
                };
                length_normalized_score(h.logprob, len, cfg.length_penalty)
                    + cfg.beta * baseline_penalty_floored(&kind, sums, cfg.attention_floor)?
            }
            ScorerKind::CoverageStep => length_normalized_score(h.joint, len, cfg.length_penalty),
            ScorerKind::BottomUp => {
                let kind = PenaltyKind::BottomUp {
                    thresholds: self.thresholds.clone(),
                };
                length_normalized_score(h.logprob, len, cfg.length_penalty)
                    + cfg.beta * baseline_penalty_floored(&kind, sums, cfg.attention_floor)?
            }
        };
        Ok(score)
    }
}

/// Orders finished hypotheses best-first: higher score, then shorter, then
/// lexicographically smaller token ids.
pub(crate) fn compare_final(a: &ScoredHypothesis, b: &ScoredHypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.hypothesis.len().cmp(&b.hypothesis.len()))
        .then_with(|| a.hypothesis.tokens.cmp(&b.hypothesis.tokens))
}

/// Bounded pool of finished hypotheses that keeps the best `capacity`.
pub(crate) struct FinishedPool {
    capacity: usize,
    items: Vec<ScoredHypothesis>,
}

impl FinishedPool {
    pub fn new(capacity: usize) -> Self {
        FinishedPool {
            capacity,
            items: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn push(&mut self, item: ScoredHypothesis) {
        if self.items.len() < self.capacity {
            self.items.push(item);
            return;
        }
        let worst = self
            .items
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| compare_final(a, b))
            .map(|(i, _)| i)
            .expect("pool at capacity is non-empty");
        if compare_final(&item, &self.items[worst]) == Ordering::Less {
            self.items[worst] = item;
        }
    }

    pub fn into_sorted(mut self) -> Vec<ScoredHypothesis> {
        self.items.sort_by(compare_final);
        self.items
    }
}
