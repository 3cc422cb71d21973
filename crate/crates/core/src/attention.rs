//! Tokens, source documents and the attention bookkeeping shared by every
//! decoder and scorer.
//!
//! A *global* attention distribution `g` describes how much attention an
//! ideal output pays to each source token in total; its sum is the optimal
//! output length `Z`. A *local* ledger `l` accumulates the cross-attention
//! rows of one partial hypothesis, one row per generated token, so its total
//! `ζ` always equals the number of generated tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating externally supplied distributions.
pub const INPUT_TOLERANCE: f64 = 1e-6;
/// Tolerance for identities that hold by construction (accumulated sums).
pub const ACCUMULATION_TOLERANCE: f64 = 1e-9;

/// A vocabulary index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl Token {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for Token {
    fn from(id: u32) -> Self {
        Token(id)
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn tokens(ids: &[u32]) -> Vec<Token> {
    ids.iter().copied().map(Token).collect()
}

pub fn token_ids(tokens: &[Token]) -> Vec<u32> {
    tokens.iter().map(|t| t.0).collect()
}

/// The input sequence being summarized, optionally with one feature vector
/// per token for the attention predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
}

impl SourceDocument {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        Self::build(tokens, None)
    }

    pub fn with_features(tokens: Vec<Token>, features: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(tokens, Some(features))
    }

    fn build(tokens: Vec<Token>, features: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let doc = SourceDocument { tokens, features };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidSource(
                "source must contain at least one token".into(),
            ));
        }
        if let Some(features) = &self.features {
            if features.len() != self.tokens.len() {
                return Err(Error::LengthMismatch {
                    expected: self.tokens.len(),
                    actual: features.len(),
                });
            }
            let dim = features[0].len();
            if let Some(bad) = features.iter().find(|f| f.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: bad.len(),
                });
            }
            if features.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSource("feature values must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f[0].len())
    }
}

/// Checks that `row` is a probability distribution: non-negative entries
/// summing to one within [`INPUT_TOLERANCE`].
pub fn validate_distribution(row: &[f64]) -> Result<()> {
    if row.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    if let Some((index, &value)) = row
        .iter()
        .enumerate()
        .find(|(_, v)| v.is_nan() || **v < 0.0)
    {
        return Err(Error::NegativeEntry { index, value });
    }
    let sum: f64 = row.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > INPUT_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

/// Per-source-token attention budget of an ideal output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalAttention {
    values: Vec<f64>,
    optimal_length: f64,
}

impl GlobalAttention {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::NegativeEntry { index, value });
        }
        let optimal_length = values.iter().sum();
        Ok(GlobalAttention {
            values,
            optimal_length,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Z`, the sum of the distribution.
    pub fn optimal_length(&self) -> f64 {
        self.optimal_length
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Running sum of the cross-attention rows of one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionLedger {
    local: Vec<f64>,
    total: f64,
}

impl AttentionLedger {
    pub fn zeros(n: usize) -> Self {
        AttentionLedger {
            local: vec![0.0; n],
            total: 0.0,
        }
    }

    pub fn local(&self) -> &[f64] {
        &self.local
    }

    /// `ζ`, the total attention paid so far.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local.is_empty()
    }

    /// Adds one validated attention row.
    pub fn accumulate(&self, row: &[f64]) -> Result<Self> {
        if row.len() != self.local.len() {
            return Err(Error::LengthMismatch {
                expected: self.local.len(),
                actual: row.len(),
            });
        }
        validate_distribution(row)?;
        Ok(self.accumulate_unchecked(row))
    }

    /// Adds a row already known to be a valid distribution of the right length.
    pub(crate) fn accumulate_unchecked(&self, row: &[f64]) -> Self {
        let local = self.local.iter().zip(row).map(|(l, a)| l + a).collect();
        // Each row carries exactly one unit of attention.
        AttentionLedger {
            local,
            total: self.total + 1.0,
        }
    }
}

/// Free-function form of [`AttentionLedger::accumulate`].
pub fn accumulate_attention(ledger: &AttentionLedger, row: &[f64]) -> Result<AttentionLedger> {
    ledger.accumulate(row)
}
