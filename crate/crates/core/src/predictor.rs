//! Global-attention prediction from per-token source features.
//!
//! The head maps every (optionally context-averaged) feature vector through
//! a linear function and an exponential, `ĝ_i = exp(W·e_i + b_i)`, so the
//! prediction is strictly positive. Parameters are fitted by full-batch
//! gradient descent on the Euclidean distance `‖ĝ − g‖₂`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{GlobalAttention, SourceDocument};
use crate::error::{Error, Result};

/// Floor applied by [`corrupt`].
pub const CORRUPTION_FLOOR: f64 = 1e-6;
const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Bias {
    /// One bias per source position; requires a fixed source length.
    PerPosition(Vec<f64>),
    Shared(f64),
}

impl Bias {
    fn at(&self, i: usize) -> f64 {
        match self {
            Bias::PerPosition(b) => b[i],
            Bias::Shared(b) => *b,
        }
    }

    pub fn as_vec(&self) -> Vec<f64> {
        match self {
            Bias::PerPosition(b) => b.clone(),
            Bias::Shared(b) => vec![*b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub learning_rate: f64,
    /// Step size at epoch `e` is `learning_rate / (1 + lr_decay · e)`.
    #[serde(default)]
    pub lr_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Average each feature vector with its immediate neighbours first.
    pub context_window: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 0.05,
            lr_decay: 0.01,
            epochs: 1000,
            seed: 0,
            context_window: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    pub weights: Vec<f64>,
    pub bias: Bias,
    pub settings: TrainSettings,
    /// Mean training loss before the first update and after every epoch.
    #[serde(default)]
    pub losses: Vec<f64>,
}

/// A training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub source: SourceDocument,
    pub target: GlobalAttention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedAttention {
    pub values: Vec<f64>,
    pub predicted_optimal_length: f64,
}

impl PredictedAttention {
    pub fn to_global(&self) -> GlobalAttention {
        GlobalAttention::new(self.values.clone()).expect("exponential outputs are positive")
    }
}

impl PredictorParams {
    /// Small seeded random weights and zero bias. The bias is per-position
    /// when every source in `dataset` has the same length, shared otherwise.
    pub fn init(dataset: &[Example], settings: TrainSettings) -> Result<Self> {
        let first = dataset.first().ok_or(Error::EmptyDataset)?;
        let d = first.source.feature_dim().ok_or(Error::MissingFeatures)?;
        let n = first.source.len();
        let fixed_length = dataset.iter().all(|ex| ex.source.len() == n);
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let weights = (0..d)
            .map(|_| INIT_SCALE * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let bias = if fixed_length {
            Bias::PerPosition(vec![0.0; n])
        } else {
            Bias::Shared(0.0)
        };
        Ok(PredictorParams {
            weights,
            bias,
            settings,
            losses: Vec::new(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    fn inputs(&self, source: &SourceDocument) -> Result<Vec<Vec<f64>>> {
        let features = source.features.as_ref().ok_or(Error::MissingFeatures)?;
        let d = self.feature_dim();
        if let Some(bad) = features.iter().find(|e| e.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        if let Bias::PerPosition(b) = &self.bias {
            if b.len() != features.len() {
                return Err(Error::LengthMismatch {
                    expected: b.len(),
                    actual: features.len(),
                });
            }
        }
        Ok(if self.settings.context_window {
            neighbour_average(features)
        } else {
            features.clone()
        })
    }

    fn logits(&self, inputs: &[Vec<f64>]) -> Vec<f64> {
        inputs
            .iter()
            .enumerate()
            .map(|(i, e)| {
                self.weights.iter().zip(e).map(|(w, x)| w * x).sum::<f64>() + self.bias.at(i)
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)?;
        checkpoint.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&Checkpoint::from(self))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Window-3 mean over neighbouring feature vectors (two at the edges).
pub fn neighbour_average(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let mut mean = vec![0.0; features[i].len()];
            for e in &features[lo..=hi] {
                mean.iter_mut().zip(e).for_each(|(m, x)| *m += x / count);
            }
            mean
        })
        .collect()
}

/// `ĝ_i = exp(W·e_i + b_i)` and `Ẑ = Σ ĝ_i`.
pub fn predict(params: &PredictorParams, source: &SourceDocument) -> Result<PredictedAttention> {
    let inputs = params.inputs(source)?;
    let values: Vec<f64> = params.logits(&inputs).into_iter().map(f64::exp).collect();
    let predicted_optimal_length = values.iter().sum();
    Ok(PredictedAttention {
        values,
        predicted_optimal_length,
    })
}

/// Euclidean distance between prediction and target.
pub fn loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    Ok(predicted
        .iter()
        .zip(target)
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        .sqrt())
}

/// Loss on one example with its analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub weights: Vec<f64>,
    /// Per-position, or a single entry for a shared bias.
    pub bias: Vec<f64>,
}

pub fn loss_and_gradient(params: &PredictorParams, example: &Example) -> Result<Gradient> {
    let inputs = params.inputs(&example.source)?;
    let target = example.target.values();
    if target.len() != inputs.len() {
        return Err(Error::LengthMismatch {
            expected: inputs.len(),
            actual: target.len(),
        });
    }
    let pred: Vec<f64> = params.logits(&inputs).into_iter().map(f64::exp).collect();
    let l = loss(&pred, target)?;
    // dL/dz_i = (ĝ_i − g_i) ĝ_i / L
    let dz: Vec<f64> = if l > 0.0 {
        pred.iter()
            .zip(target)
            .map(|(p, g)| (p - g) * p / l)
            .collect()
    } else {
        vec![0.0; pred.len()]
    };
    let mut weights = vec![0.0; params.feature_dim()];
    for (e, dzi) in inputs.iter().zip(&dz) {
        weights.iter_mut().zip(e).for_each(|(w, x)| *w += dzi * x);
    }
    let bias = match params.bias {
        Bias::PerPosition(_) => dz,
        Bias::Shared(_) => vec![dz.iter().sum()],
    };
    Ok(Gradient {
        loss: l,
        weights,
        bias,
    })
}

/// Mean loss and mean gradient over the dataset. Per-example work runs in
/// parallel; the reduction is sequential in dataset order.
fn batch_gradient(params: &PredictorParams, dataset: &[Example]) -> Result<Gradient> {
    let grads = dataset
        .par_iter()
        .map(|ex| loss_and_gradient(params, ex))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / dataset.len() as f64;
    let mut total = Gradient {
        loss: 0.0,
        weights: vec![0.0; params.feature_dim()],
        bias: vec![0.0; params.bias.as_vec().len()],
    };
    for g in &grads {
        total.loss += g.loss * scale;
        total
            .weights
            .iter_mut()
            .zip(&g.weights)
            .for_each(|(a, b)| *a += b * scale);
        total
            .bias
            .iter_mut()
            .zip(&g.bias)
            .for_each(|(a, b)| *a += b * scale);
    }
    Ok(total)
}

pub fn mean_loss(params: &PredictorParams, dataset: &[Example]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses = dataset
        .par_iter()
        .map(|ex| predict(params, &ex.source).and_then(|p| loss(&p.values, ex.target.values())))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Runs `params.settings.epochs` full-batch gradient steps and records the
/// mean loss trajectory (initial loss first).
pub fn train(params: PredictorParams, dataset: &[Example]) -> Result<PredictorParams> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = params;
    let TrainSettings {
        learning_rate,
        lr_decay,
        epochs,
        ..
    } = params.settings;
    let mut losses = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let grad = batch_gradient(&params, dataset)?;
        losses.push(grad.loss);
        if learning_rate == 0.0 {
            continue;
        }
        let lr = learning_rate / (1.0 + lr_decay * epoch as f64);
        params
            .weights
            .iter_mut()
            .zip(&grad.weights)
            .for_each(|(w, g)| *w -= lr * g);
        match &mut params.bias {
            Bias::PerPosition(b) => b.iter_mut().zip(&grad.bias).for_each(|(b, g)| *b -= lr * g),
            Bias::Shared(b) => *b -= lr * grad.bias[0],
        }
    }
    losses.push(mean_loss(&params, dataset)?);
    params.losses = losses;
    Ok(params)
}

/// Coefficient of determination `1 − Σ(g − ĝ)² / Σ(g − ḡ)²`. A constant
/// target yields 1 on an exact fit and `-inf` otherwise.
pub fn r_squared(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::EmptySet);
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let residual: f64 = target
        .iter()
        .zip(predicted)
        .map(|(g, p)| (g - p) * (g - p))
        .sum();
    let spread: f64 = target.iter().map(|g| (g - mean) * (g - mean)).sum();
    if spread == 0.0 {
        return Ok(if residual == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        });
    }
    Ok(1.0 - residual / spread)
}

/// Multiplicative-scale Gaussian corruption:
/// `g_i' = max(g_i + σ · mean(g) · η_i, 1e-6)` with seeded standard-normal `η`.
pub fn corrupt(g: &GlobalAttention, sigma: f64, seed: u64) -> GlobalAttention {
    if sigma == 0.0 {
        return g.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = g.optimal_length() / g.len() as f64;
    let values = g
        .values()
        .iter()
        .map(|v| {
            let eta: f64 = rng.sample(StandardNormal);
            (v + sigma * mean * eta).max(CORRUPTION_FLOOR)
        })
        .collect();
    GlobalAttention::new(values).expect("corrupted values are clamped positive")
}

/// On-disk checkpoint layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
    d: usize,
    meta: CheckpointMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    bias: String,
    #[serde(flatten)]
    settings: TrainSettings,
    #[serde(default)]
    losses: Vec<f64>,
}

impl From<&PredictorParams> for Checkpoint {
    fn from(p: &PredictorParams) -> Self {
        let bias = match p.bias {
            Bias::PerPosition(_) => "per-position",
            Bias::Shared(_) => "shared",
        };
        Checkpoint {
            w: p.weights.clone(),
            b: p.bias.as_vec(),
            d: p.weights.len(),
            meta: CheckpointMeta {
                bias: bias.into(),
                settings: p.settings.clone(),
                losses: p.losses.clone(),
            },
        }
    }
}

impl TryFrom<Checkpoint> for PredictorParams {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.w.len() != c.d {
            return Err(Error::DimensionMismatch {
                expected: c.d,
                actual: c.w.len(),
            });
        }
        let bias = match (c.meta.bias.as_str(), c.b.as_slice()) {
            ("shared", [b]) => Bias::Shared(*b),
            ("per-position", b) if !b.is_empty() => Bias::PerPosition(b.to_vec()),
            (kind, b) => {
                return Err(Error::Parse(format!(
                    "bias layout {kind:?} with {} entries",
                    b.len()
                )))
            }
        };
        Ok(PredictorParams {
            weights: c.w,
            bias,
            settings: c.meta.settings,
            losses: c.meta.losses,
        })
    }
}
