//! Prefix-indexed lookup-table model for hand-checked fixtures.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{AttentiveModel, StepOutput};
use crate::attention::{tokens, validate_distribution, SourceDocument, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Next-token probabilities (not logs).
    pub p: Vec<f64>,
    pub att: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub prefix: Vec<u32>,
    pub p: Vec<f64>,
    pub att: Vec<f64>,
}

/// JSON layout of a table model. The end-of-sequence token defaults to the
/// last vocabulary id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModelFile {
    pub vocab_size: usize,
    pub source_len: usize,
    pub entries: Vec<TableEntry>,
    pub default: TableRow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eos: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct TableModel {
    vocab_size: usize,
    source_len: usize,
    eos: Token,
    entries: HashMap<Vec<Token>, StepOutput>,
    default: StepOutput,
}

impl TableModel {
    pub fn from_file(file: TableModelFile) -> Result<Self> {
        if file.vocab_size < 2 {
            return Err(Error::InvalidModel(
                "vocabulary needs a content token and end-of-sequence".into(),
            ));
        }
        if file.source_len == 0 {
            return Err(Error::InvalidModel(
                "source length must be at least 1".into(),
            ));
        }
        let eos = Token(file.eos.unwrap_or(file.vocab_size as u32 - 1));
        if eos.index() >= file.vocab_size {
            return Err(Error::InvalidModel(format!(
                "end-of-sequence id {eos} outside the vocabulary"
            )));
        }
        let convert = |p: &[f64], att: &[f64]| -> Result<StepOutput> {
            if p.len() != file.vocab_size {
                return Err(Error::LengthMismatch {
                    expected: file.vocab_size,
                    actual: p.len(),
                });
            }
            validate_distribution(p)?;
            let out = StepOutput {
                logprobs: p.iter().map(|x| x.ln()).collect(),
                attention: att.to_vec(),
            };
            out.validate(file.vocab_size, file.source_len)?;
            Ok(out)
        };
        let mut entries = HashMap::with_capacity(file.entries.len());
        for entry in &file.entries {
            if entry
                .prefix
                .iter()
                .any(|&id| id as usize >= file.vocab_size)
            {
                return Err(Error::InvalidModel(format!(
                    "prefix {:?} outside the vocabulary",
                    entry.prefix
                )));
            }
            if entries
                .insert(tokens(&entry.prefix), convert(&entry.p, &entry.att)?)
                .is_some()
            {
                return Err(Error::InvalidModel(format!(
                    "duplicate prefix {:?}",
                    entry.prefix
                )));
            }
        }
        let default = convert(&file.default.p, &file.default.att)?;
        Ok(TableModel {
            vocab_size: file.vocab_size,
            source_len: file.source_len,
            eos,
            entries,
            default,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    /// Toy table: vocabulary {a=0, b=1, eos=2} over a two-token source.
    pub fn toy() -> Self {
        Self::from_json(TOY_TABLE_JSON).expect("toy table is valid")
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// A source document of the declared length (token ids are irrelevant
    /// to a table model).
    pub fn source(&self) -> SourceDocument {
        SourceDocument::new((0..self.source_len as u32).map(Token).collect())
            .expect("source_len >= 1")
    }
}

pub const TOY_TABLE_JSON: &str = r#"{"vocab_size": 3, "source_len": 2, "entries": [{"prefix": [], "p": [0.6,0.3,0.1], "att": [0.7,0.3]}, {"prefix": [0], "p": [0.1,0.6,0.3], "att": [0.2,0.8]}, {"prefix": [0,1], "p": [0.1,0.1,0.8], "att": [0.5,0.5]}], "default": {"p": [0.1,0.1,0.8], "att": [0.5,0.5]}}"#;

impl AttentiveModel for TableModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos(&self) -> Token {
        self.eos
    }

    fn step(&self, source: &SourceDocument, prefix: &[Token]) -> Result<StepOutput> {
        if source.len() != self.source_len {
            return Err(Error::LengthMismatch {
                expected: self.source_len,
                actual: source.len(),
            });
        }
        Ok(self.entries.get(prefix).unwrap_or(&self.default).clone())
    }
}
