//! The autoregressive attentive model contract and the desk-scale models
//! used to exercise the decoders.
//!
//! A model answers one question: given a source and the tokens generated so
//! far, what is the next-token log-probability vector and which single
//! cross-attention row does the next token pay to the source? Real
//! encoder-decoders pool attention over layers and heads before it reaches
//! this boundary; the decoders only ever see one row per step.

mod synthetic;
mod table;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use synthetic::{SyntheticInstance, SyntheticModel, SyntheticSpec};
pub use table::{TableEntry, TableModel, TableModelFile, TableRow};

use crate::attention::{
    validate_distribution, GlobalAttention, SourceDocument, Token, INPUT_TOLERANCE,
};
use crate::error::{Error, Result};

/// One model step: next-token log-probabilities and the attention row the
/// next token pays to the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub logprobs: Vec<f64>,
    pub attention: Vec<f64>,
}

impl StepOutput {
    pub fn validate(&self, vocab_size: usize, source_len: usize) -> Result<()> {
        if self.logprobs.len() != vocab_size {
            return Err(Error::LengthMismatch {
                expected: vocab_size,
                actual: self.logprobs.len(),
            });
        }
        if self.attention.len() != source_len {
            return Err(Error::LengthMismatch {
                expected: source_len,
                actual: self.attention.len(),
            });
        }
        if self
            .logprobs
            .iter()
            .any(|lp| lp.is_nan() || *lp > INPUT_TOLERANCE)
        {
            return Err(Error::InvalidModel("log-probabilities must be <= 0".into()));
        }
        let mass: f64 = self.logprobs.iter().map(|lp| lp.exp()).sum();
        if (mass - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::NotNormalized { sum: mass });
        }
        validate_distribution(&self.attention)
    }
}

/// An autoregressive model that exposes cross attention.
pub trait AttentiveModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// The end-of-sequence token; always a member of the vocabulary.
    fn eos(&self) -> Token;

    /// Longest prefix the model accepts, if bounded.
    fn horizon(&self) -> Option<usize> {
        None
    }

    /// Next-token distribution and attention row after `prefix`, the
    /// generated tokens so far (the start token is implicit).
    fn step(&self, source: &SourceDocument, prefix: &[Token]) -> Result<StepOutput>;
}

/// Sums the attention rows produced while feeding `reference` to the model
/// one token at a time. `reference` excludes the start token and must end
/// with (and contain exactly one) end-of-sequence token.
pub fn teacher_forced_global_attention<M: AttentiveModel + ?Sized>(
    model: &M,
    source: &SourceDocument,
    reference: &[Token],
) -> Result<GlobalAttention> {
    let mut blocks = teacher_forced_prefix_attention(model, source, reference, &[])?;
    Ok(blocks
        .pop()
        .expect("whole-reference distribution is always produced"))
}

/// Teacher-forced attention accumulated over reference prefixes. For every
/// cut `c` in `cuts` (strictly inside the reference) the distribution of the
/// first `c` tokens is returned, followed by the whole-reference distribution.
pub fn teacher_forced_prefix_attention<M: AttentiveModel + ?Sized>(
    model: &M,
    source: &SourceDocument,
    reference: &[Token],
    cuts: &[usize],
) -> Result<Vec<GlobalAttention>> {
    check_reference(model, reference)?;
    let n = source.len();
    let mut sums = vec![0.0; n];
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut next_cut = cuts.iter().copied().peekable();
    for t in 0..reference.len() {
        let step = model.step(source, &reference[..t])?;
        step.validate(model.vocab_size(), n)?;
        for (acc, a) in sums.iter_mut().zip(&step.attention) {
            *acc += a;
        }
        while next_cut.peek() == Some(&(t + 1)) {
            next_cut.next();
            out.push(GlobalAttention::new(sums.clone())?);
        }
    }
    out.push(GlobalAttention::new(sums)?);
    Ok(out)
}

fn check_reference<M: AttentiveModel + ?Sized>(model: &M, reference: &[Token]) -> Result<()> {
    let eos = model.eos();
    match reference.split_last() {
        None => Err(Error::InvalidReference("reference is empty".into())),
        Some((last, _)) if *last != eos => Err(Error::InvalidReference(
            "reference must end with end-of-sequence".into(),
        )),
        Some((_, body)) if body.contains(&eos) => Err(Error::InvalidReference(
            "end-of-sequence may only appear last".into(),
        )),
        Some(_) => match reference.iter().find(|t| t.index() >= model.vocab_size()) {
            Some(t) => Err(Error::InvalidReference(format!(
                "token {t} outside the vocabulary"
            ))),
            None => Ok(()),
        },
    }
}

/// Any of the bundled models.
#[derive(Debug, Clone)]
pub enum Model {
    Table(TableModel),
    Synthetic(SyntheticModel),
}

impl AttentiveModel for Model {
    fn vocab_size(&self) -> usize {
        match self {
            Model::Table(m) => m.vocab_size(),
            Model::Synthetic(m) => m.vocab_size(),
        }
    }

    fn eos(&self) -> Token {
        match self {
            Model::Table(m) => m.eos(),
            Model::Synthetic(m) => m.eos(),
        }
    }

    fn horizon(&self) -> Option<usize> {
        match self {
            Model::Table(m) => m.horizon(),
            Model::Synthetic(m) => m.horizon(),
        }
    }

    fn step(&self, source: &SourceDocument, prefix: &[Token]) -> Result<StepOutput> {
        match self {
            Model::Table(m) => m.step(source, prefix),
            Model::Synthetic(m) => m.step(source, prefix),
        }
    }
}

/// On-disk model description: either a lookup table or a synthetic spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Synthetic { synthetic: SyntheticSpec },
    Table(TableModelFile),
}

impl ModelFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(self) -> Result<Model> {
        match self {
            ModelFile::Synthetic { synthetic } => {
                Ok(Model::Synthetic(SyntheticModel::new(synthetic)?))
            }
            ModelFile::Table(file) => Ok(Model::Table(TableModel::from_file(file)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::tokens;

    #[test]
    fn step_output_validation() {
        let ok = StepOutput {
            logprobs: vec![0.5f64.ln(), 0.5f64.ln()],
            attention: vec![1.0],
        };
        assert!(ok.validate(2, 1).is_ok());
        assert!(ok.validate(3, 1).is_err());
        let bad = StepOutput {
            logprobs: vec![0.5f64.ln(), 0.6f64.ln()],
            attention: vec![1.0],
        };
        assert!(matches!(
            bad.validate(2, 1),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn reference_checks() {
        let model = TableModel::toy();
        let src = model.source();
        for bad in [vec![], vec![0, 1], vec![2, 2], vec![0, 5, 2]] {
            assert!(
                teacher_forced_global_attention(&model, &src, &tokens(&bad)).is_err(),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn prefix_attention_cuts() {
        let model = TableModel::toy();
        let src = model.source();
        let blocks =
            teacher_forced_prefix_attention(&model, &src, &tokens(&[0, 1, 2]), &[1, 2]).unwrap();
        assert_eq!(blocks.len(), 3);
        assert!((blocks[0].optimal_length() - 1.0).abs() < 1e-12);
        assert!((blocks[1].optimal_length() - 2.0).abs() < 1e-12);
        assert!((blocks[2].optimal_length() - 3.0).abs() < 1e-12);
    }
}
