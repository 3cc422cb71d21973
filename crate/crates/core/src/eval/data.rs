//! JSONL instance and result files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attention::{tokens, GlobalAttention, SourceDocument, Token};
use crate::config::ScorerConfig;
use crate::error::{Error, Result};

/// One line of an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub source: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_attention: Option<Vec<f64>>,
}

impl Instance {
    pub fn source_document(&self) -> Result<SourceDocument> {
        let doc = SourceDocument {
            tokens: tokens(&self.source),
            features: self.features.clone(),
        };
        doc.validate()
            .map_err(|e| Error::InvalidSource(format!("instance {}: {e}", self.id)))?;
        Ok(doc)
    }

    pub fn reference_tokens(&self) -> Option<Vec<Token>> {
        self.reference.as_deref().map(tokens)
    }

    pub fn provided_attention(&self) -> Result<Option<GlobalAttention>> {
        self.global_attention
            .clone()
            .map(GlobalAttention::new)
            .transpose()
    }
}

/// One line of a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    /// Generated tokens, end-of-sequence included.
    pub hypothesis: Vec<u32>,
    pub final_score: f64,
    /// Terminal attention score `Σ min(l, g) / ζ` of the hypothesis.
    pub attention_score: f64,
    pub length: usize,
    #[serde(rename = "Z")]
    pub z: f64,
    pub forced: bool,
}

/// Everything recorded about one decode in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub config: ScorerConfig,
    pub g_mode: String,
    pub hypothesis: Vec<u32>,
    pub final_score: f64,
    pub attention_score: f64,
    /// Product of the per-step attention scores (global scorer only).
    pub attention_product: Option<f64>,
    pub length: usize,
    #[serde(rename = "Z")]
    pub z: f64,
    pub forced: bool,
    pub wall_time_ms: f64,
}

impl From<&ExperimentRecord> for ResultRecord {
    fn from(r: &ExperimentRecord) -> Self {
        ResultRecord {
            id: r.id.clone(),
            hypothesis: r.hypothesis.clone(),
            final_score: r.final_score,
            attention_score: r.attention_score,
            length: r.length,
            z: r.z,
            forced: r.forced,
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
    );
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
