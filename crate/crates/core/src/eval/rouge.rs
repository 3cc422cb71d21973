//! ROUGE-N and ROUGE-L over token ids.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::Token;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RougeOrder {
    N(usize),
    L,
}

impl fmt::Display for RougeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RougeOrder::N(n) => write!(f, "rouge-{n}"),
            RougeOrder::L => f.write_str("rouge-l"),
        }
    }
}

impl FromStr for RougeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("rouge-") {
            "l" => Ok(RougeOrder::L),
            n => n
                .parse()
                .ok()
                .filter(|n| *n > 0)
                .map(RougeOrder::N)
                .ok_or_else(|| Error::Parse(format!("unknown ROUGE order {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, hyp_units: usize, ref_units: usize) -> Self {
        let precision = if hyp_units == 0 {
            0.0
        } else {
            overlap as f64 / hyp_units as f64
        };
        let recall = if ref_units == 0 {
            0.0
        } else {
            overlap as f64 / ref_units as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

/// ROUGE between a reference and a hypothesis. N-gram overlap is clipped
/// at the reference multiplicity; ROUGE-L uses the longest common
/// subsequence. An empty hypothesis scores zero.
pub fn rouge(reference: &[Token], hypothesis: &[Token], order: RougeOrder) -> Result<RougeScore> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if hypothesis.is_empty() {
        return Ok(RougeScore::default());
    }
    Ok(match order {
        RougeOrder::N(n) => {
            let refs = ngram_counts(reference, n);
            let hyps = ngram_counts(hypothesis, n);
            let overlap = hyps
                .iter()
                .map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0)))
                .sum();
            RougeScore::from_counts(overlap, hyps.values().sum(), refs.values().sum())
        }
        RougeOrder::L => RougeScore::from_counts(
            lcs_len(reference, hypothesis),
            hypothesis.len(),
            reference.len(),
        ),
    })
}

fn ngram_counts(tokens: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[Token], b: &[Token]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
