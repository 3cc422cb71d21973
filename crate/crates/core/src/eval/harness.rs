//! Dataset-level experiment drivers: decoding with a chosen source of
//! global attention, hyper-parameter sweeps, and the beam-size degradation
//! report.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{ExperimentRecord, Instance};
use super::metrics::{length_stats, novel_word_pct};
use super::rouge::{rouge, RougeOrder};
use crate::attention::{token_ids, GlobalAttention, Token};
use crate::config::{ScorerConfig, ScorerKind};
use crate::error::{Error, Result};
use crate::model::{teacher_forced_global_attention, AttentiveModel, SyntheticModel};
use crate::predictor::{corrupt, predict, PredictorParams};
use crate::scoring::attention_score_raw;
use crate::search::{
    beam_search, blocked_decode, exhaustive_oracle, sequence_count, BlockSchedule, DecodeResult,
    MAX_ORACLE_SEQUENCES,
};

/// Where the global attention distribution for a decode comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GMode {
    /// Teacher-forced over the instance reference.
    Oracle,
    /// Output of a trained predictor.
    Predicted,
    /// Taken verbatim from the instance file.
    Provided,
    /// Oracle (or provided, without a reference) distribution with Gaussian noise.
    Corrupted,
}

impl GMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GMode::Oracle => "oracle",
            GMode::Predicted => "predicted",
            GMode::Provided => "provided",
            GMode::Corrupted => "corrupted",
        }
    }
}

impl fmt::Display for GMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            GMode::Oracle,
            GMode::Predicted,
            GMode::Provided,
            GMode::Corrupted,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown g-mode {s:?}")))
    }
}

/// Global-attention source settings for a decode run.
#[derive(Debug, Clone, Copy)]
pub struct GSource<'a> {
    pub mode: GMode,
    pub predictor: Option<&'a PredictorParams>,
    pub sigma: f64,
    pub seed: u64,
}

impl GSource<'_> {
    pub fn oracle() -> Self {
        GSource {
            mode: GMode::Oracle,
            predictor: None,
            sigma: 0.0,
            seed: 0,
        }
    }
}

impl<'a> GSource<'a> {
    pub fn predicted(predictor: &'a PredictorParams) -> Self {
        GSource {
            mode: GMode::Predicted,
            predictor: Some(predictor),
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn corrupted(sigma: f64, seed: u64) -> Self {
        GSource {
            mode: GMode::Corrupted,
            predictor: None,
            sigma,
            seed,
        }
    }
}

/// Samples `count` instances from a synthetic model, with instance seeds
/// `first_seed..first_seed + count`.
pub fn synthetic_dataset(
    model: &SyntheticModel,
    count: usize,
    first_seed: u64,
) -> Result<Vec<Instance>> {
    (0..count as u64)
        .map(|i| {
            let seed = first_seed.wrapping_add(i);
            let inst = model.sample_instance(seed)?;
            Ok(Instance {
                id: format!("syn-{seed}"),
                source: token_ids(&inst.source.tokens),
                features: inst.source.features,
                reference: Some(token_ids(&inst.reference)),
                global_attention: Some(inst.global_attention.values().to_vec()),
            })
        })
        .collect()
}

fn reference_of(instance: &Instance) -> Result<Vec<Token>> {
    instance.reference_tokens().ok_or_else(|| {
        Error::InvalidReference(format!("instance {} has no reference", instance.id))
    })
}

/// Resolves the global attention distribution for `instance` (the
/// `index`-th of its dataset, which seeds corruption).
pub fn resolve_global_attention<M: AttentiveModel + ?Sized>(
    model: &M,
    instance: &Instance,
    index: usize,
    gsrc: &GSource<'_>,
) -> Result<GlobalAttention> {
    let source = instance.source_document()?;
    match gsrc.mode {
        GMode::Oracle => teacher_forced_global_attention(model, &source, &reference_of(instance)?),
        GMode::Provided => instance.provided_attention()?.ok_or_else(|| {
            Error::InvalidConfig(format!("instance {} has no global_attention", instance.id))
        }),
        GMode::Predicted => {
            let params = gsrc
                .predictor
                .ok_or_else(|| Error::InvalidConfig("predicted g-mode needs a predictor".into()))?;
            Ok(predict(params, &source)?.to_global())
        }
        GMode::Corrupted => {
            if gsrc.sigma.is_nan() || gsrc.sigma < 0.0 {
                return Err(Error::InvalidConfig("sigma must be non-negative".into()));
            }
            let clean = match instance.reference {
                Some(_) => {
                    teacher_forced_global_attention(model, &source, &reference_of(instance)?)?
                }
                None => instance.provided_attention()?.ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "instance {} has neither reference nor global_attention",
                        instance.id
                    ))
                })?,
            };
            Ok(corrupt(
                &clean,
                gsrc.sigma,
                gsrc.seed.wrapping_add(index as u64),
            ))
        }
    }
}

/// Decodes one instance and records the outcome.
pub fn decode_instance<M: AttentiveModel + ?Sized>(
    model: &M,
    instance: &Instance,
    index: usize,
    config: &ScorerConfig,
    gsrc: &GSource<'_>,
) -> Result<(ExperimentRecord, DecodeResult)> {
    let started = Instant::now();
    let source = instance.source_document()?;
    let g = resolve_global_attention(model, instance, index, gsrc)?;
    let result = match config.block_length {
        Some(block) => {
            if gsrc.mode != GMode::Oracle {
                return Err(Error::InvalidConfig(
                    "blocked decoding needs oracle g-mode".into(),
                ));
            }
            let schedule =
                BlockSchedule::from_reference(model, &source, &reference_of(instance)?, block)?;
            blocked_decode(model, &source, &schedule, config)?
        }
        None => beam_search(model, &source, &g, config)?,
    };
    let h = &result.best.hypothesis;
    let record = ExperimentRecord {
        id: instance.id.clone(),
        config: config.clone(),
        g_mode: gsrc.mode.to_string(),
        hypothesis: token_ids(&h.tokens),
        final_score: result.best.score,
        attention_score: attention_score_raw(h.ledger.local(), h.ledger.total(), g.values())?,
        attention_product: h.attention_product(),
        length: h.len(),
        z: g.optimal_length(),
        forced: h.forced,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((record, result))
}

/// Decodes every instance (in parallel) and returns records in input order.
pub fn decode_dataset<M: AttentiveModel + ?Sized>(
    model: &M,
    instances: &[Instance],
    config: &ScorerConfig,
    gsrc: &GSource<'_>,
) -> Result<Vec<ExperimentRecord>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| decode_instance(model, inst, i, config, gsrc).map(|(r, _)| r))
        .collect()
}

/// Aggregate metrics of one configuration over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub count: usize,
    /// Mean ROUGE F1 scores, when references are available.
    pub rouge1: Option<f64>,
    pub rouge2: Option<f64>,
    pub rouge_l: Option<f64>,
    pub mean_length: f64,
    pub mean_deviation: f64,
    pub mean_final_score: f64,
    pub novel_pct: f64,
    pub forced: usize,
}

fn strip_last(tokens: &[Token]) -> &[Token] {
    &tokens[..tokens.len().saturating_sub(1)]
}

/// Summarizes records produced for `instances` (matched by position).
pub fn summarize(instances: &[Instance], records: &[ExperimentRecord]) -> Result<MetricsRow> {
    if records.is_empty() {
        return Err(Error::EmptySet);
    }
    if instances.len() != records.len() {
        return Err(Error::LengthMismatch {
            expected: instances.len(),
            actual: records.len(),
        });
    }
    let n = records.len() as f64;
    let lengths: Vec<(usize, f64)> = records.iter().map(|r| (r.length, r.z)).collect();
    let stats = length_stats(&lengths)?;

    let mut rouge_sums = [0.0; 3];
    let mut with_reference = 0usize;
    let mut novel = 0.0;
    for (inst, rec) in instances.iter().zip(records) {
        let hyp: Vec<Token> = rec.hypothesis.iter().copied().map(Token).collect();
        let content = strip_last(&hyp);
        let src: Vec<Token> = inst.source.iter().copied().map(Token).collect();
        novel += if content.is_empty() {
            0.0
        } else {
            novel_word_pct(&src, content)?
        };
        if let Some(reference) = inst.reference_tokens() {
            let reference = strip_last(&reference);
            if !reference.is_empty() {
                with_reference += 1;
                for (sum, order) in
                    rouge_sums
                        .iter_mut()
                        .zip([RougeOrder::N(1), RougeOrder::N(2), RougeOrder::L])
                {
                    *sum += rouge(reference, content, order)?.f1;
                }
            }
        }
    }
    let rouge_mean = |i: usize| (with_reference > 0).then(|| rouge_sums[i] / with_reference as f64);
    Ok(MetricsRow {
        count: records.len(),
        rouge1: rouge_mean(0),
        rouge2: rouge_mean(1),
        rouge_l: rouge_mean(2),
        mean_length: stats.mean_length,
        mean_deviation: stats.mean_deviation,
        mean_final_score: records.iter().map(|r| r.final_score).sum::<f64>() / n,
        novel_pct: novel / n,
        forced: records.iter().filter(|r| r.forced).count(),
    })
}

/// Grids searched over by default.
pub const DEFAULT_BETAS: [f64; 8] = [2.0, 4.0, 6.0, 10.0, 12.0, 15.0, 18.0, 20.0];
pub const DEFAULT_GAMMAS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub gamma: f64,
    pub metrics: MetricsRow,
}

/// Decodes the dataset once per (β, γ) grid point, β-major.
pub fn run_sweep<M: AttentiveModel + ?Sized>(
    model: &M,
    instances: &[Instance],
    betas: &[f64],
    gammas: &[f64],
    config: &ScorerConfig,
    gsrc: &GSource<'_>,
) -> Result<Vec<SweepRow>> {
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(betas.len() * gammas.len());
    for &beta in betas {
        for &gamma in gammas {
            let cfg = ScorerConfig {
                beta,
                gamma,
                ..config.clone()
            };
            let records = decode_dataset(model, instances, &cfg, gsrc)?;
            rows.push(SweepRow {
                beta,
                gamma,
                metrics: summarize(instances, &records)?,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    /// `beam`, `global-oracle`, `global-predicted` or `exhaustive`.
    pub mode: String,
    pub beam_size: Option<usize>,
    pub metrics: MetricsRow,
    /// Instances (among the exhaustive-feasible ones) where this row's
    /// objective beat the exhaustive optimum; only reported for
    /// `global-oracle` rows.
    pub dominance_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub rows: Vec<DegradationRow>,
    /// Number of instances small enough for exhaustive search.
    pub exhaustive_feasible: usize,
}

/// Decodes the dataset at every beam size with the beam baseline and with
/// global-aware search (oracle g, and predicted g when a predictor is
/// given). When instances are small enough, the exhaustive optimum of the
/// global objective is added as a final row and every global-oracle row is
/// checked against it.
pub fn run_degradation<M: AttentiveModel + ?Sized>(
    model: &M,
    instances: &[Instance],
    beam_sizes: &[usize],
    config: &ScorerConfig,
    predictor: Option<&PredictorParams>,
) -> Result<DegradationReport> {
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if beam_sizes.is_empty() {
        return Err(Error::InvalidConfig("beam size list is empty".into()));
    }
    let oracle_g = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| resolve_global_attention(model, inst, i, &GSource::oracle()))
        .collect::<Result<Vec<_>>>()?;
    let global_cfg = ScorerConfig {
        scorer: ScorerKind::Global,
        ..config.clone()
    };
    let feasible: Vec<usize> = oracle_g
        .iter()
        .enumerate()
        .filter(|(_, g)| {
            sequence_count(
                model.vocab_size(),
                global_cfg.resolved_max_steps(g.optimal_length()),
            ) <= MAX_ORACLE_SEQUENCES
        })
        .map(|(i, _)| i)
        .collect();
    let optimum = feasible
        .par_iter()
        .map(|&i| {
            let source = instances[i].source_document()?;
            let l_max = global_cfg.resolved_max_steps(oracle_g[i].optimal_length());
            let started = Instant::now();
            let out = exhaustive_oracle(model, &source, &oracle_g[i], &global_cfg, l_max)?;
            Ok((i, out, started.elapsed()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut modes: Vec<(&str, ScorerKind, GSource<'_>)> = vec![
        ("beam", ScorerKind::Beam, GSource::oracle()),
        ("global-oracle", ScorerKind::Global, GSource::oracle()),
    ];
    if let Some(p) = predictor {
        modes.push((
            "global-predicted",
            ScorerKind::Global,
            GSource::predicted(p),
        ));
    }

    let mut rows = Vec::new();
    for (name, scorer, gsrc) in &modes {
        for &k in beam_sizes {
            let cfg = ScorerConfig {
                scorer: *scorer,
                beam_size: k,
                ..config.clone()
            };
            let records = decode_dataset(model, instances, &cfg, gsrc)?;
            let dominance_violations = (*name == "global-oracle").then(|| {
                optimum
                    .iter()
                    .filter(|(i, out, _)| records[*i].final_score > out.best.score)
                    .count()
            });
            rows.push(DegradationRow {
                mode: name.to_string(),
                beam_size: Some(k),
                metrics: summarize(instances, &records)?,
                dominance_violations,
            });
        }
    }

    if !optimum.is_empty() {
        let subset: Vec<Instance> = optimum
            .iter()
            .map(|(i, _, _)| instances[*i].clone())
            .collect();
        let records: Vec<ExperimentRecord> = optimum
            .iter()
            .map(|(i, out, elapsed)| {
                let h = &out.best.hypothesis;
                let g = &oracle_g[*i];
                Ok(ExperimentRecord {
                    id: instances[*i].id.clone(),
                    config: global_cfg.clone(),
                    g_mode: GMode::Oracle.to_string(),
                    hypothesis: token_ids(&h.tokens),
                    final_score: out.best.score,
                    attention_score: attention_score_raw(
                        h.ledger.local(),
                        h.ledger.total(),
                        g.values(),
                    )?,
                    attention_product: h.attention_product(),
                    length: h.len(),
                    z: g.optimal_length(),
                    forced: false,
                    wall_time_ms: elapsed.as_secs_f64() * 1e3,
                })
            })
            .collect::<Result<_>>()?;
        rows.push(DegradationRow {
            mode: "exhaustive".into(),
            beam_size: None,
            metrics: summarize(&subset, &records)?,
            dominance_violations: None,
        });
    }
    Ok(DegradationReport {
        rows,
        exhaustive_feasible: optimum.len(),
    })
}

impl DegradationReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "mode              K     R-1     R-2     R-L   len    |len-Z|  score     viol\n",
        );
        let fmt_opt = |x: Option<f64>| x.map_or("     -".to_string(), |v| format!("{:6.4}", v));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>3}  {}  {}  {}  {:6.2}  {:6.3}  {:8.4}  {}\n",
                row.mode,
                row.beam_size.map_or("-".to_string(), |k| k.to_string()),
                fmt_opt(row.metrics.rouge1),
                fmt_opt(row.metrics.rouge2),
                fmt_opt(row.metrics.rouge_l),
                row.metrics.mean_length,
                row.metrics.mean_deviation,
                row.metrics.mean_final_score,
                row.dominance_violations
                    .map_or("-".to_string(), |v| v.to_string()),
            ));
        }
        out
    }
}
