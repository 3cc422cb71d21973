//! Seeded synthetic attentive model.
//!
//! Each source token carries a feature vector. A hidden linear map turns the
//! features into a salience `s_i = exp(w·e_i + b)`, and the attention rows
//! spend the not-yet-covered salience first, with a small bump on a source
//! position tied to the previous token. Teacher forcing a reference of
//! length `round(Σ s)` therefore yields a global attention distribution close
//! to `s`, a smooth function of the features that the predictor can learn.
//!
//! The next-token distribution is pseudo-random per (source, position,
//! previous token) and the end-of-sequence logit rises around a "natural"
//! length that is deliberately offset from the optimal one, so unguided
//! beam search misses the target length by a source-dependent margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{teacher_forced_global_attention, AttentiveModel, StepOutput};
use crate::attention::{GlobalAttention, SourceDocument, Token};
use crate::error::{Error, Result};

/// Parameters of a synthetic model. Identical specs build identical models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Vocabulary size including the end-of-sequence token (the last id).
    pub vocab_size: usize,
    pub source_len: usize,
    pub feature_dim: usize,
    /// Scale of the content-token logits.
    pub peakedness: f64,
    /// Relative attention bump on the source position tied to the previous token.
    pub focus: f64,
    /// Expected salience per source token; sets the typical optimal length.
    pub salience_mean: f64,
    /// Log-scale spread of the natural stopping length around the optimal length.
    pub length_spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 0,
            vocab_size: 12,
            source_len: 8,
            feature_dim: 6,
            peakedness: 2.0,
            focus: 0.3,
            salience_mean: 1.25,
            length_spread: 0.35,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.vocab_size < 2 {
            return fail("vocab_size must be at least 2");
        }
        if self.vocab_size > u32::MAX as usize {
            return fail("vocab_size too large");
        }
        if self.source_len == 0 {
            return fail("source_len must be at least 1");
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be at least 1");
        }
        for (name, v) in [
            ("peakedness", self.peakedness),
            ("focus", self.focus),
            ("length_spread", self.length_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(&format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.salience_mean.is_finite() && self.salience_mean > 0.0) {
            return fail("salience_mean must be positive");
        }
        Ok(())
    }
}

/// A generated instance: a source with features plus its reference and
/// teacher-forced global attention.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub source: SourceDocument,
    pub reference: Vec<Token>,
    pub global_attention: GlobalAttention,
}

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    spec: SyntheticSpec,
    weights: Vec<f64>,
    salience_bias: f64,
    token_position: Vec<usize>,
    token_bias: Vec<f64>,
}

const WEIGHT_SCALE: f64 = 0.8;
const EOS_SLOPE: f64 = 1.5;
const RESIDUAL_FLOOR: f64 = 0.05;

impl SyntheticModel {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scale = WEIGHT_SCALE / (spec.feature_dim as f64).sqrt();
        let weights = (0..spec.feature_dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        // E[exp(w·e)] = exp(|w|²/2) for standard-normal features; centre on the mean.
        let salience_bias = spec.salience_mean.ln() - 0.5 * WEIGHT_SCALE * WEIGHT_SCALE;
        let content = spec.vocab_size - 1;
        let token_position = (0..content)
            .map(|_| rng.random_range(0..spec.source_len))
            .collect();
        let token_bias = (0..content)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(SyntheticModel {
            spec,
            weights,
            salience_bias,
            token_position,
            token_bias,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    /// Per-source-token salience, `exp(w·e_i + b)`.
    pub fn salience(&self, source: &SourceDocument) -> Result<Vec<f64>> {
        let features = source.features.as_ref().ok_or(Error::MissingFeatures)?;
        if source.len() != self.spec.source_len {
            return Err(Error::LengthMismatch {
                expected: self.spec.source_len,
                actual: source.len(),
            });
        }
        features
            .iter()
            .map(|e| {
                if e.len() != self.spec.feature_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.spec.feature_dim,
                        actual: e.len(),
                    });
                }
                let z: f64 = self.weights.iter().zip(e).map(|(w, x)| w * x).sum();
                Ok((z + self.salience_bias).exp())
            })
            .collect()
    }

    /// Draws a source document with standard-normal features.
    pub fn sample_source(&self, instance_seed: u64) -> SourceDocument {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.spec.seed ^ 0x5eed_0000, instance_seed));
        let content = self.spec.vocab_size as u32 - 1;
        let tokens = (0..self.spec.source_len)
            .map(|_| Token(rng.random_range(0..content.max(1))))
            .collect();
        let features = (0..self.spec.source_len)
            .map(|_| {
                (0..self.spec.feature_dim)
                    .map(|_| rng.sample(StandardNormal))
                    .collect()
            })
            .collect();
        SourceDocument::with_features(tokens, features).expect("generated source is well formed")
    }

    /// A reference of length `max(1, round(Σ s))`: greedy content tokens
    /// followed by end-of-sequence.
    pub fn sample_reference(&self, source: &SourceDocument) -> Result<Vec<Token>> {
        let total: f64 = self.salience(source)?.iter().sum();
        let length = (total.round() as usize).max(1);
        let eos = self.eos();
        let mut reference = Vec::with_capacity(length);
        for _ in 1..length {
            let out = self.step(source, &reference)?;
            let best = out
                .logprobs
                .iter()
                .enumerate()
                .filter(|(v, _)| *v != eos.index())
                .fold((0usize, f64::NEG_INFINITY), |best, (v, &lp)| {
                    if lp > best.1 {
                        (v, lp)
                    } else {
                        best
                    }
                });
            reference.push(Token(best.0 as u32));
        }
        reference.push(eos);
        Ok(reference)
    }

    pub fn sample_instance(&self, instance_seed: u64) -> Result<SyntheticInstance> {
        let source = self.sample_source(instance_seed);
        let reference = self.sample_reference(&source)?;
        let global_attention = teacher_forced_global_attention(self, &source, &reference)?;
        Ok(SyntheticInstance {
            source,
            reference,
            global_attention,
        })
    }

    fn attention_row(&self, salience: &[f64], cover: &[f64], last: Option<Token>) -> Vec<f64> {
        let bump = last.and_then(|t| self.token_position.get(t.index()).copied());
        let mut row: Vec<f64> = salience
            .iter()
            .zip(cover)
            .enumerate()
            .map(|(i, (s, c))| {
                let residual = (s - c).max(RESIDUAL_FLOOR * s);
                if Some(i) == bump {
                    residual * (1.0 + self.spec.focus)
                } else {
                    residual
                }
            })
            .collect();
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
        row
    }

    fn source_key(&self, source: &SourceDocument) -> u64 {
        source
            .tokens
            .iter()
            .fold(mix(self.spec.seed, 0x50_u64), |h, t| mix(h, u64::from(t.0)))
    }
}

impl AttentiveModel for SyntheticModel {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn eos(&self) -> Token {
        Token(self.spec.vocab_size as u32 - 1)
    }

    fn step(&self, source: &SourceDocument, prefix: &[Token]) -> Result<StepOutput> {
        if let Some(bad) = prefix.iter().find(|t| t.index() >= self.spec.vocab_size) {
            return Err(Error::InvalidReference(format!(
                "token {bad} outside the vocabulary"
            )));
        }
        let salience = self.salience(source)?;
        let mut cover = vec![0.0; salience.len()];
        let mut row = self.attention_row(&salience, &cover, None);
        for &tok in prefix {
            cover.iter_mut().zip(&row).for_each(|(c, a)| *c += a);
            row = self.attention_row(&salience, &cover, Some(tok));
        }

        let key = self.source_key(source);
        let t = prefix.len() + 1;
        let last = prefix.last().map_or(u64::MAX, |tok| u64::from(tok.0));
        let context = mix(mix(key, t as u64), last);
        let content = self.spec.vocab_size - 1;
        let mut logits = Vec::with_capacity(self.spec.vocab_size);
        for v in 0..content {
            let u = unit(mix(context, v as u64)) * 2.0 - 1.0;
            logits.push(self.spec.peakedness * u + 0.5 * self.token_bias[v]);
        }
        let total: f64 = salience.iter().sum();
        let offset = (unit(mix(key, 0xe05)) * 2.0 - 1.0) * self.spec.length_spread;
        let natural = total * offset.exp();
        logits.push(self.spec.peakedness + EOS_SLOPE * (t as f64 - natural));

        Ok(StepOutput {
            logprobs: log_softmax(&logits),
            attention: row,
        })
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

// splitmix64 finalizer over a combined key
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::validate_distribution;

    fn model(seed: u64) -> SyntheticModel {
        SyntheticModel::new(SyntheticSpec {
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn deterministic_per_spec() {
        let (a, b) = (model(7), model(7));
        let src = a.sample_source(3);
        assert_eq!(src, b.sample_source(3));
        for prefix in [vec![], vec![Token(1)], vec![Token(4), Token(0), Token(9)]] {
            assert_eq!(
                a.step(&src, &prefix).unwrap(),
                b.step(&src, &prefix).unwrap()
            );
        }
    }

    #[test]
    fn seeds_differ_on_some_probe() {
        let (a, b) = (model(1), model(2));
        let differs = (0..100u64).any(|i| {
            let src = a.sample_source(i);
            let prefix: Vec<Token> = (0..(i % 5) as u32).map(Token).collect();
            a.step(&src, &prefix).unwrap() != b.step(&src, &prefix).unwrap()
        });
        assert!(differs);
    }

    #[test]
    fn outputs_are_valid_distributions() {
        let m = model(11);
        for i in 0..1000u64 {
            let src = m.sample_source(i % 50);
            let prefix: Vec<Token> = (0..(i % 13))
                .map(|j| Token(((i + j) % 11) as u32))
                .collect();
            let out = m.step(&src, &prefix).unwrap();
            out.validate(m.vocab_size(), src.len()).unwrap();
            let mass: f64 = out.logprobs.iter().map(|x| x.exp()).sum();
            assert!((mass - 1.0).abs() < 1e-6);
            validate_distribution(&out.attention).unwrap();
        }
    }

    #[test]
    fn teacher_forced_length_matches_reference() {
        let m = model(5);
        for i in 0..20 {
            let inst = m.sample_instance(i).unwrap();
            assert!(
                (inst.global_attention.optimal_length() - inst.reference.len() as f64).abs() < 1e-9
            );
            assert_eq!(inst.reference.last(), Some(&m.eos()));
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        for spec in [
            SyntheticSpec {
                vocab_size: 1,
                ..Default::default()
            },
            SyntheticSpec {
                source_len: 0,
                ..Default::default()
            },
            SyntheticSpec {
                feature_dim: 0,
                ..Default::default()
            },
            SyntheticSpec {
                salience_mean: 0.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(
                SyntheticModel::new(spec),
                Err(Error::InvalidSpec(_))
            ));
        }
    }

    #[test]
    fn requires_features() {
        let m = model(0);
        let src = SourceDocument::new(vec![Token(0); 8]).unwrap();
        assert_eq!(m.step(&src, &[]).unwrap_err(), Error::MissingFeatures);
    }
}
