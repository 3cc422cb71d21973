//! Self-check suite for the scoring identities and search guarantees, run
//! by `gbeam verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{GlobalAttention, SourceDocument, Token};
use crate::config::{ScorerConfig, ScorerKind};
use crate::error::Result;
use crate::model::{AttentiveModel, SyntheticModel, SyntheticSpec};
use crate::scoring::{attention_score_raw, joint_step_update, overshoot, step_length_reward};
use crate::search::{beam_search, exhaustive_oracle, frontier_size, sequence_count};

/// Tolerance for floating-point identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub pairs: usize,
    pub instances: usize,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            pairs: 10_000,
            instances: 100,
            seed: 0,
        }
    }
}

type Check = fn(&VerifySettings) -> Result<String, String>;

/// Runs every check; never stops at the first failure.
pub fn run_all(settings: &VerifySettings) -> Vec<CheckOutcome> {
    let checks: [(&'static str, Check); 6] = [
        ("overshoot identity", check_overshoot_identity),
        ("score bounds", check_bounds),
        ("length reward peak", check_length_reward_peak),
        ("beta zero reduction", check_reduction),
        ("exhaustive equivalence", check_oracle_equivalence),
        ("incremental consistency", check_incremental),
    ];
    checks
        .iter()
        .map(|(name, check)| match check(settings) {
            Ok(detail) => CheckOutcome {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckOutcome {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

/// Random `(local, global)` pair: `steps` softmax-like rows summed into the
/// local vector, and a non-negative global vector.
pub fn random_pair(rng: &mut impl Rng) -> (Vec<f64>, f64, Vec<f64>) {
    let n = rng.random_range(1..=12);
    let steps = rng.random_range(1..=20);
    let mut local = vec![0.0; n];
    for _ in 0..steps {
        let row: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
        let sum: f64 = row.iter().sum();
        for (l, r) in local.iter_mut().zip(&row) {
            *l += if sum > 0.0 { r / sum } else { 1.0 / n as f64 };
        }
    }
    let scale = rng.random_range(0.1..3.0) * steps as f64 / n as f64;
    let global = (0..n).map(|_| rng.random::<f64>() * scale).collect();
    (local, steps as f64, global)
}

fn check_overshoot_identity(s: &VerifySettings) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..s.pairs {
        let (local, total, global) = random_pair(&mut rng);
        let a = attention_score_raw(&local, total, &global).map_err(|e| e.to_string())?;
        worst = worst.max((a - (1.0 - overshoot(&local, &global) / total)).abs());
        // lowering one global entry can only raise the overshoot
        let mut lowered = global.clone();
        let i = rng.random_range(0..lowered.len());
        lowered[i] *= rng.random::<f64>();
        let a_lower = attention_score_raw(&local, total, &lowered).map_err(|e| e.to_string())?;
        if a_lower > a + IDENTITY_TOLERANCE {
            return Err(format!(
                "score rose from {a} to {a_lower} as overshoot grew"
            ));
        }
    }
    if worst > IDENTITY_TOLERANCE {
        return Err(format!("max deviation {worst:e}"));
    }
    Ok(format!("{} pairs, max deviation {worst:e}", s.pairs))
}

fn check_bounds(s: &VerifySettings) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    for _ in 0..s.pairs {
        let (local, total, global) = random_pair(&mut rng);
        let a = attention_score_raw(&local, total, &global).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&a) {
            return Err(format!("score {a} outside [0, 1]"));
        }
        let tiny: Vec<f64> = local
            .iter()
            .map(|l| l * rng.random_range(0.0..0.99))
            .collect();
        let a = attention_score_raw(&local, total, &tiny).map_err(|e| e.to_string())?;
        let expected = tiny.iter().sum::<f64>() / total;
        if (a - expected).abs() > IDENTITY_TOLERANCE {
            return Err(format!("all-exceed score {a} != {expected}"));
        }
    }
    Ok(format!("{} pairs within [0, 1]", s.pairs))
}

/// Integer `j ≥ 1` maximizing the running mean of the length reward.
pub fn length_reward_peak(z: f64, horizon: usize) -> Result<usize> {
    let mut best = (f64::NEG_INFINITY, 0);
    let mut sum = 0.0;
    for j in 1..=horizon {
        sum += step_length_reward(j, z)?;
        let mean = sum / j as f64;
        if mean > best.0 {
            best = (mean, j);
        }
    }
    Ok(best.1)
}

fn check_length_reward_peak(_: &VerifySettings) -> Result<String, String> {
    for z in 5..200usize {
        let peak = length_reward_peak(z as f64, 4 * z).map_err(|e| e.to_string())?;
        if peak.abs_diff(z) > 1 {
            return Err(format!("Z = {z}: peak at {peak}"));
        }
    }
    Ok("Z in 5..200, peak within 1".into())
}

fn small_model(seed: u64, vocab_size: usize, source_len: usize) -> Result<SyntheticModel> {
    SyntheticModel::new(SyntheticSpec {
        seed,
        vocab_size,
        source_len,
        salience_mean: 0.7,
        ..SyntheticSpec::default()
    })
}

fn check_reduction(s: &VerifySettings) -> Result<String, String> {
    let model = SyntheticModel::new(SyntheticSpec {
        seed: s.seed,
        ..SyntheticSpec::default()
    })
    .map_err(|e| e.to_string())?;
    for i in 0..s.instances as u64 {
        let inst = model.sample_instance(i).map_err(|e| e.to_string())?;
        let global = ScorerConfig {
            beta: 0.0,
            ..ScorerConfig::new(ScorerKind::Global)
        };
        let beam = ScorerConfig {
            length_penalty: 1.0,
            ..ScorerConfig::new(ScorerKind::Beam)
        };
        let a = beam_search(&model, &inst.source, &inst.global_attention, &global)
            .map_err(|e| e.to_string())?;
        let b = beam_search(&model, &inst.source, &inst.global_attention, &beam)
            .map_err(|e| e.to_string())?;
        if a.best.hypothesis.tokens != b.best.hypothesis.tokens {
            return Err(format!("instance {i}: outputs differ"));
        }
    }
    Ok(format!("{} instances identical", s.instances))
}

fn check_oracle_equivalence(s: &VerifySettings) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    for i in 0..s.instances as u64 {
        let vocab = rng.random_range(2..=4usize);
        let l_max = rng.random_range(1..=6usize);
        let model = small_model(s.seed.wrapping_add(i), vocab, rng.random_range(1..=4))
            .map_err(|e| e.to_string())?;
        let inst = model.sample_instance(i).map_err(|e| e.to_string())?;
        let frontier = frontier_size(vocab, l_max) as usize;
        let cfg = ScorerConfig {
            beam_size: frontier,
            max_steps: Some(l_max),
            ..ScorerConfig::default()
        };
        let oracle = exhaustive_oracle(&model, &inst.source, &inst.global_attention, &cfg, l_max)
            .map_err(|e| e.to_string())?;
        let beam = beam_search(&model, &inst.source, &inst.global_attention, &cfg)
            .map_err(|e| e.to_string())?;
        if beam.best.hypothesis.tokens != oracle.best.hypothesis.tokens {
            return Err(format!(
                "instance {i} (V={vocab}, L={l_max}, {} sequences): beam {:?} vs exhaustive {:?}",
                sequence_count(vocab, l_max),
                beam.best.hypothesis.tokens,
                oracle.best.hypothesis.tokens
            ));
        }
        for k in [1, 2, 3] {
            let small = beam_search(
                &model,
                &inst.source,
                &inst.global_attention,
                &ScorerConfig {
                    beam_size: k,
                    ..cfg.clone()
                },
            )
            .map_err(|e| e.to_string())?;
            if small.best.score > oracle.best.score + IDENTITY_TOLERANCE {
                return Err(format!("instance {i}: K={k} beat the exhaustive optimum"));
            }
        }
    }
    Ok(format!("{} instances", s.instances))
}

/// Replays `tokens` through the model from an empty prefix and recomputes
/// the joint score and attention total of the global objective.
pub fn replay_joint<M: AttentiveModel + ?Sized>(
    model: &M,
    source: &SourceDocument,
    g: &GlobalAttention,
    config: &ScorerConfig,
    tokens: &[Token],
) -> Result<(f64, f64)> {
    let z = g.optimal_length();
    let mut local = vec![0.0; source.len()];
    let mut joint = 0.0;
    for t in 1..=tokens.len() {
        let out = model.step(source, &tokens[..t - 1])?;
        for (l, a) in local.iter_mut().zip(&out.attention) {
            *l += a;
        }
        let a = attention_score_raw(&local, t as f64, g.values())?;
        let r = step_length_reward(t, z)?;
        let logp = out.logprobs[tokens[t - 1].index()];
        joint = joint_step_update(
            joint,
            logp,
            a,
            r,
            config.beta,
            config.gamma,
            config.attention_floor,
        );
    }
    Ok((joint, local.iter().sum()))
}

fn check_incremental(s: &VerifySettings) -> Result<String, String> {
    let model = SyntheticModel::new(SyntheticSpec {
        seed: s.seed,
        ..SyntheticSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = ScorerConfig::default();
    for i in 0..s.instances as u64 {
        let inst = model.sample_instance(i).map_err(|e| e.to_string())?;
        let out = beam_search(&model, &inst.source, &inst.global_attention, &cfg)
            .map_err(|e| e.to_string())?;
        for scored in &out.pool {
            let h = &scored.hypothesis;
            let (joint, total) = replay_joint(
                &model,
                &inst.source,
                &inst.global_attention,
                &cfg,
                &h.tokens,
            )
            .map_err(|e| e.to_string())?;
            if (joint - h.joint).abs() > IDENTITY_TOLERANCE {
                return Err(format!("instance {i}: joint {} vs replay {joint}", h.joint));
            }
            if (h.ledger.total() - h.len() as f64).abs() > IDENTITY_TOLERANCE
                || (total - h.len() as f64).abs() > IDENTITY_TOLERANCE
            {
                return Err(format!(
                    "instance {i}: attention total {} for length {}",
                    h.ledger.total(),
                    h.len()
                ));
            }
        }
    }
    Ok(format!("{} instances", s.instances))
}
