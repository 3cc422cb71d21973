//! Exhaustive search over every terminated sequence up to a length bound.
//! Used as ground truth for the beam engines on small vocabularies.

use crate::attention::{GlobalAttention, SourceDocument, Token};
use crate::config::ScorerConfig;
use crate::error::{Error, Result};
use crate::hypothesis::Hypothesis;
use crate::model::AttentiveModel;

use super::engine::{AttentionGuide, FinishedPool, StepScorer};
use super::{DecodeResult, ScoredHypothesis, SearchStats};

/// Largest number of terminated sequences the oracle will enumerate.
pub const MAX_ORACLE_SEQUENCES: u128 = 1_000_000;

/// Number of sequences of generated length `1..=l_max` that end with the
/// end-of-sequence token: `Σ_{t=1}^{l_max} (V−1)^{t−1}`. Saturates on overflow.
pub fn sequence_count(vocab_size: usize, l_max: usize) -> u128 {
    let content = vocab_size.saturating_sub(1) as u128;
    let mut total: u128 = 0;
    let mut layer: u128 = 1;
    for _ in 0..l_max {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(content);
    }
    total
}

/// Smallest beam size for which beam search with step cap `l_max` never
/// prunes: every step's candidates fit in the beam, and the finished pool
/// can hold every terminated sequence, so the search cannot stop early.
pub fn frontier_size(vocab_size: usize, l_max: usize) -> u128 {
    let content = vocab_size.saturating_sub(1) as u128;
    let widest =
        (vocab_size as u128).saturating_mul(content.saturating_pow(l_max.saturating_sub(1) as u32));
    widest.max(sequence_count(vocab_size, l_max))
}

/// Scores every terminated sequence of generated length at most `l_max`
/// with the same pipeline as [`super::beam_search`] and returns the best.
/// The pool holds the best `config.beam_size` sequences.
pub fn exhaustive_oracle<M: AttentiveModel + ?Sized>(
    model: &M,
    source: &SourceDocument,
    g: &GlobalAttention,
    config: &ScorerConfig,
    l_max: usize,
) -> Result<DecodeResult> {
    run_oracle(model, source, g, config, l_max)
}

pub(crate) fn run_oracle<M: AttentiveModel + ?Sized, G: AttentionGuide + ?Sized>(
    model: &M,
    source: &SourceDocument,
    guide: &G,
    config: &ScorerConfig,
    l_max: usize,
) -> Result<DecodeResult> {
    if l_max == 0 {
        return Err(Error::InvalidConfig("l_max must be at least 1".into()));
    }
    let count = sequence_count(model.vocab_size(), l_max);
    if count > MAX_ORACLE_SEQUENCES {
        return Err(Error::SearchSpaceTooLarge {
            count,
            limit: MAX_ORACLE_SEQUENCES,
        });
    }
    let scorer = StepScorer::new(model, source, guide, config)?;
    let mut walk = Walk {
        scorer: &scorer,
        l_max,
        pool: FinishedPool::new(config.beam_size),
        enumerated: 0,
    };
    walk.visit(&Hypothesis::root(source.len()))?;

    let enumerated = walk.enumerated;
    let pool = walk.pool.into_sorted();
    let best = pool.first().cloned().ok_or(Error::NoHypothesis)?;
    let stats = SearchStats {
        steps: l_max,
        enumerated: Some(enumerated),
        ..Default::default()
    };
    Ok(DecodeResult {
        best,
        pool,
        stats,
        trace: None,
    })
}

struct Walk<'s, 'a, M: AttentiveModel + ?Sized, G: AttentionGuide + ?Sized> {
    scorer: &'s StepScorer<'a, M, G>,
    l_max: usize,
    pool: FinishedPool,
    enumerated: u64,
}

impl<M: AttentiveModel + ?Sized, G: AttentionGuide + ?Sized> Walk<'_, '_, M, G> {
    fn visit(&mut self, beam: &Hypothesis) -> Result<()> {
        let t = beam.len() + 1;
        let exp = self.scorer.expand(beam)?;
        let eos = self.scorer.eos;
        if self.scorer.eos_allowed(t) || t == self.l_max {
            let h = self.scorer.child(beam, &exp, eos);
            let score = self.scorer.final_score(&h)?;
            self.enumerated += 1;
            self.pool.push(ScoredHypothesis {
                hypothesis: h,
                score,
            });
        }
        if t == self.l_max {
            return Ok(());
        }
        for v in (0..exp.logprobs.len() as u32)
            .map(Token)
            .filter(|&v| v != eos)
        {
            let child = self.scorer.child(beam, &exp, v);
            self.visit(&child)?;
        }
        Ok(())
    }
}
