//! Decoding engines.
//!
//! [`beam_search`] follows one loop for every scorer: expand each active
//! beam over the vocabulary, score the continuations incrementally, move
//! end-of-sequence continuations ranked within the top `K` into the finished
//! pool and keep the best `K` unfinished continuations active. The loop ends
//! once the pool holds `K` hypotheses, no beam is left, or the step cap is
//! reached, in which case every surviving beam is closed with end-of-sequence.

mod blocked;
mod engine;
mod oracle;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use blocked::{blocked_decode, reference_block_cuts, BlockSchedule, Segment};
pub use engine::AttentionGuide;
pub use oracle::{exhaustive_oracle, frontier_size, sequence_count, MAX_ORACLE_SEQUENCES};

use crate::attention::{GlobalAttention, SourceDocument, Token};
use crate::config::ScorerConfig;
use crate::error::{Error, Result};
use crate::hypothesis::Hypothesis;
use crate::model::AttentiveModel;
use engine::{FinishedPool, StepScorer};

/// A finished hypothesis with its final selection score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHypothesis {
    pub hypothesis: Hypothesis,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Number of decoding steps run.
    pub steps: usize,
    /// Beams expanded at each step.
    pub expanded: Vec<usize>,
    /// Attention-score evaluations at each step.
    pub attention_evaluations: Vec<usize>,
    /// Terminated sequences scored (exhaustive search only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enumerated: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSnapshot {
    pub tokens: Vec<u32>,
    pub joint: f64,
    pub logprob: f64,
}

/// Active beams after one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub step: usize,
    pub beams: Vec<BeamSnapshot>,
    pub finished: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub best: ScoredHypothesis,
    /// Finished hypotheses, best first; at most `K` of them.
    pub pool: Vec<ScoredHypothesis>,
    pub stats: SearchStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<StepSnapshot>>,
}

/// One continuation of a parent beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub parent: usize,
    pub token: Token,
    pub score: f64,
}

fn compare_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.parent.cmp(&b.parent))
        .then(a.token.cmp(&b.token))
}

/// Sorts continuations by score (descending), then parent index, then token id.
pub fn rank_candidates(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by(compare_candidates);
    candidates
}

/// Selects the top `k` of all parent × token continuations, where the score
/// of appending token `v` to parent `p` is `parent_scores[p] + step_scores[p][v]`.
/// Non-finite scores are never selected.
pub fn expand_and_select(
    parent_scores: &[f64],
    step_scores: &[Vec<f64>],
    k: usize,
) -> Vec<Candidate> {
    let candidates = parent_scores
        .iter()
        .zip(step_scores)
        .enumerate()
        .flat_map(|(parent, (base, row))| {
            row.iter().enumerate().map(move |(v, s)| Candidate {
                parent,
                token: Token(v as u32),
                score: base + s,
            })
        })
        .filter(|c| c.score.is_finite())
        .collect();
    let mut ranked = rank_candidates(candidates);
    ranked.truncate(k);
    ranked
}

/// Beam search guided by a single global attention distribution `g`.
/// The scorer, beam size and step cap come from `config`.
pub fn beam_search<M: AttentiveModel + ?Sized>(
    model: &M,
    source: &SourceDocument,
    g: &GlobalAttention,
    config: &ScorerConfig,
) -> Result<DecodeResult> {
    run_beam(model, source, g, config)
}

pub(crate) fn run_beam<M: AttentiveModel + ?Sized, G: AttentionGuide + ?Sized>(
    model: &M,
    source: &SourceDocument,
    guide: &G,
    config: &ScorerConfig,
) -> Result<DecodeResult> {
    let scorer = StepScorer::new(model, source, guide, config)?;
    let k = config.beam_size;
    let max_steps = scorer.max_steps();
    let eos = scorer.eos;

    let mut active = vec![Hypothesis::root(source.len())];
    let mut pool = FinishedPool::new(k);
    let mut stats = SearchStats::default();
    let mut trace = config.trace.then(Vec::new);

    for t in 1..=max_steps {
        let expansions = active
            .iter()
            .map(|beam| scorer.expand(beam))
            .collect::<Result<Vec<_>>>()?;
        stats.steps = t;
        stats.expanded.push(active.len());
        stats.attention_evaluations.push(
            expansions
                .iter()
                .filter(|e| e.attention_score.is_some())
                .count(),
        );

        if t == max_steps {
            for (beam, exp) in active.iter().zip(&expansions) {
                let mut h = scorer.child(beam, exp, eos);
                h.forced = true;
                let score = scorer.final_score(&h)?;
                pool.push(ScoredHypothesis {
                    hypothesis: h,
                    score,
                });
            }
            if let Some(trace) = trace.as_mut() {
                trace.push(StepSnapshot {
                    step: t,
                    beams: Vec::new(),
                    finished: pool.len(),
                });
            }
            break;
        }

        let eos_ok = scorer.eos_allowed(t);
        let candidates = active
            .iter()
            .zip(&expansions)
            .enumerate()
            .flat_map(|(parent, (beam, exp))| {
                (0..exp.logprobs.len() as u32)
                    .map(Token)
                    .filter(move |&v| eos_ok || v != eos)
                    .map(move |v| Candidate {
                        parent,
                        token: v,
                        score: StepScorer::<M, G>::candidate_score(beam.joint, exp, v),
                    })
            })
            .filter(|c| c.score.is_finite())
            .collect();
        let ranked = rank_candidates(candidates);

        let mut next = Vec::with_capacity(k);
        for (rank, c) in ranked.iter().enumerate() {
            if next.len() >= k && rank >= k {
                break;
            }
            let (beam, exp) = (&active[c.parent], &expansions[c.parent]);
            if c.token == eos {
                if rank < k && !pool.is_full() {
                    let h = scorer.child(beam, exp, eos);
                    let score = scorer.final_score(&h)?;
                    pool.push(ScoredHypothesis {
                        hypothesis: h,
                        score,
                    });
                }
            } else if next.len() < k {
                next.push(scorer.child(beam, exp, c.token));
            }
        }
        active = next;

        if let Some(trace) = trace.as_mut() {
            let beams = active
                .iter()
                .map(|h| BeamSnapshot {
                    tokens: h.tokens.iter().map(|t| t.0).collect(),
                    joint: h.joint,
                    logprob: h.logprob,
                })
                .collect();
            trace.push(StepSnapshot {
                step: t,
                beams,
                finished: pool.len(),
            });
        }
        if pool.is_full() || active.is_empty() {
            break;
        }
    }

    let pool = pool.into_sorted();
    let best = pool.first().cloned().ok_or(Error::NoHypothesis)?;
    Ok(DecodeResult {
        best,
        pool,
        stats,
        trace,
    })
}
