//! Blocked decoding: the attention score switches between per-segment
//! global distributions as the output grows.
//!
//! With block length `B` and a whole-sequence length target `Z`, the output
//! is split into `ceil(Z / B) − 1` leading blocks. Block `k` covers steps
//! `(k−1)B + 1 ..= kB` and is scored against the distribution of the first
//! `kB` target tokens; after the last block the whole-sequence distribution
//! takes over until every beam has finished.

use serde::{Deserialize, Serialize};

use crate::attention::{GlobalAttention, SourceDocument, Token};
use crate::config::ScorerConfig;
use crate::error::{Error, Result};
use crate::model::{teacher_forced_prefix_attention, AttentiveModel};

use super::engine::AttentionGuide;
use super::{run_beam, DecodeResult};

/// Steps `start..=end` (or `start..` when `end` is `None`) guided by `attention`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: Option<usize>,
    pub attention: GlobalAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    segments: Vec<Segment>,
}

impl BlockSchedule {
    /// Validates that segments start at step 1, are contiguous, end with an
    /// open-ended segment, and share one source length.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let fail = |msg: String| Err(Error::InvalidSchedule(msg));
        let Some(last) = segments.last() else {
            return fail("schedule has no segments".into());
        };
        if last.end.is_some() {
            return fail("final segment must be open-ended".into());
        }
        let n = segments[0].attention.len();
        let mut expected_start = 1;
        for (i, seg) in segments.iter().enumerate() {
            if seg.start != expected_start {
                return fail(format!(
                    "segment {i} starts at {} instead of {expected_start}",
                    seg.start
                ));
            }
            if seg.attention.len() != n {
                return fail(format!(
                    "segment {i} has source length {} instead of {n}",
                    seg.attention.len()
                ));
            }
            match seg.end {
                Some(end) if end < seg.start => return fail(format!("segment {i} is empty")),
                Some(end) => expected_start = end + 1,
                None if i + 1 != segments.len() => {
                    return fail(format!("segment {i} is open-ended but not last"))
                }
                None => {}
            }
        }
        Ok(BlockSchedule { segments })
    }

    /// Builds the schedule from leading block distributions `blocks`
    /// (first `B`, `2B`, … target tokens) and the whole-sequence distribution.
    pub fn from_blocks(
        block_length: usize,
        blocks: Vec<GlobalAttention>,
        whole: GlobalAttention,
    ) -> Result<Self> {
        if block_length == 0 {
            return Err(Error::InvalidSchedule(
                "block length must be at least 1".into(),
            ));
        }
        let mut segments: Vec<Segment> = blocks
            .into_iter()
            .enumerate()
            .map(|(k, attention)| Segment {
                start: k * block_length + 1,
                end: Some((k + 1) * block_length),
                attention,
            })
            .collect();
        segments.push(Segment {
            start: segments.len() * block_length + 1,
            end: None,
            attention: whole,
        });
        Self::new(segments)
    }

    /// Teacher-forced schedule: leading blocks from reference prefixes of
    /// length `B, 2B, …` strictly shorter than the reference.
    pub fn from_reference<M: AttentiveModel + ?Sized>(
        model: &M,
        source: &SourceDocument,
        reference: &[Token],
        block_length: usize,
    ) -> Result<Self> {
        if block_length == 0 {
            return Err(Error::InvalidSchedule(
                "block length must be at least 1".into(),
            ));
        }
        let cuts = reference_block_cuts(reference.len(), block_length);
        let mut dists = teacher_forced_prefix_attention(model, source, reference, &cuts)?;
        let whole = dists.pop().expect("whole-reference distribution");
        Self::from_blocks(block_length, dists, whole)
    }

    /// Number of leading blocks for a length target `z`: `ceil(z / B) − 1`.
    pub fn leading_blocks(z: f64, block_length: usize) -> usize {
        if z.is_nan() || z <= 0.0 || block_length == 0 {
            return 0;
        }
        ((z / block_length as f64).ceil() as usize).saturating_sub(1)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn attention_at(&self, t: usize) -> &GlobalAttention {
        let seg = self
            .segments
            .iter()
            .find(|s| t >= s.start && s.end.is_none_or(|e| t <= e))
            .unwrap_or_else(|| self.segments.last().expect("non-empty"));
        &seg.attention
    }
}

impl AttentionGuide for BlockSchedule {
    fn at_step(&self, t: usize) -> &GlobalAttention {
        self.attention_at(t)
    }

    fn whole(&self) -> &GlobalAttention {
        &self.segments.last().expect("non-empty").attention
    }
}

/// Reference prefix lengths `B, 2B, …` strictly below `reference_len`.
/// A 25-token reference with `B = 10` gives `[10, 20]`: blocks 1–10, 11–20
/// and the final 5 tokens covered by the whole-reference distribution.
pub fn reference_block_cuts(reference_len: usize, block_length: usize) -> Vec<usize> {
    if block_length == 0 {
        return Vec::new();
    }
    (1..)
        .map(|k| k * block_length)
        .take_while(|&c| c < reference_len)
        .collect()
}

/// Beam search whose attention score at step `t` uses the schedule's
/// distribution for `t`. The local ledger is never reset between blocks, and
/// the length reward always targets the whole-sequence length.
pub fn blocked_decode<M: AttentiveModel + ?Sized>(
    model: &M,
    source: &SourceDocument,
    schedule: &BlockSchedule,
    config: &ScorerConfig,
) -> Result<DecodeResult> {
    if schedule.whole().len() != source.len() {
        return Err(Error::InvalidSchedule(format!(
            "schedule covers {} source tokens, source has {}",
            schedule.whole().len(),
            source.len()
        )));
    }
    run_beam(model, source, schedule, config)
}
