//! Property tests over randomly generated inputs.

use global_beam::attention::tokens;
use global_beam::eval::{rouge, ExperimentRecord, RougeOrder};
use global_beam::model::{teacher_forced_global_attention, AttentiveModel};
use global_beam::predictor::{predict, Bias, PredictorParams, TrainSettings};
use global_beam::scoring::{attention_score_raw, overshoot};
use global_beam::{
    beam_search, AttentionLedger, ScorerConfig, ScorerKind, SourceDocument, SyntheticModel,
    SyntheticSpec, Token,
};
use proptest::prelude::*;

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// `steps` attention rows over `n` source tokens.
fn rows(n: usize, steps: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(0.001f64..1.0, n).prop_map(normalize),
        steps,
    )
}

fn rows_any() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..10, 1usize..25).prop_flat_map(|(n, t)| rows(n, t))
}

fn ledger_of(rows: &[Vec<f64>]) -> AttentionLedger {
    rows.iter()
        .fold(AttentionLedger::zeros(rows[0].len()), |l, r| {
            l.accumulate(r).unwrap()
        })
}

fn model_strategy() -> impl Strategy<Value = SyntheticModel> {
    (any::<u64>(), 2usize..8, 1usize..8).prop_map(|(seed, vocab_size, source_len)| {
        SyntheticModel::new(SyntheticSpec {
            seed,
            vocab_size,
            source_len,
            ..Default::default()
        })
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ledger_total_counts_rows(rows in rows_any()) {
        let ledger = ledger_of(&rows);
        prop_assert!((ledger.total() - rows.len() as f64).abs() <= 1e-9);
        prop_assert!((ledger.local().iter().sum::<f64>() - rows.len() as f64).abs() <= 1e-9);
    }

    #[test]
    fn ledger_is_order_independent(rows in rows_any(), seed in any::<u64>()) {
        let mut shuffled = rows.clone();
        // deterministic Fisher-Yates from the seed
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let (a, b) = (ledger_of(&rows), ledger_of(&shuffled));
        for (x, y) in a.local().iter().zip(b.local()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn score_matches_overshoot_form_and_bounds(
        rows in rows_any(),
        scale in 0.01f64..3.0,
        raw in prop::collection::vec(0.0f64..1.0, 10),
    ) {
        let ledger = ledger_of(&rows);
        let n = ledger.len();
        let g: Vec<f64> = raw[..n].iter().map(|x| x * scale * rows.len() as f64 / n as f64).collect();
        let a = attention_score_raw(ledger.local(), ledger.total(), &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - (1.0 - overshoot(ledger.local(), &g) / ledger.total())).abs() <= 1e-9);
    }

    #[test]
    fn teacher_forced_mass_equals_reference_length(
        model in model_strategy(),
        instance in any::<u64>(),
        content in prop::collection::vec(0u32..64, 0..10),
    ) {
        let source = model.sample_source(instance);
        let eos = model.eos();
        let mut reference: Vec<Token> = content.iter().map(|t| Token(t % eos.0)).collect();
        reference.push(eos);
        let g = teacher_forced_global_attention(&model, &source, &reference).unwrap();
        prop_assert!((g.optimal_length() - reference.len() as f64).abs() <= 1e-9);
    }

    #[test]
    fn model_steps_are_valid_and_repeatable(
        model in model_strategy(),
        instance in any::<u64>(),
        content in prop::collection::vec(0u32..64, 0..12),
    ) {
        let source = model.sample_source(instance);
        let prefix: Vec<Token> = content.iter().map(|t| Token(t % model.vocab_size() as u32)).collect();
        let a = model.step(&source, &prefix).unwrap();
        let b = model.step(&source, &prefix).unwrap();
        prop_assert!(a.validate(model.vocab_size(), source.len()).is_ok());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_beta_joint_is_log_probability(model in model_strategy(), instance in any::<u64>(), k in 1usize..5) {
        let inst = model.sample_instance(instance).unwrap();
        let cfg = ScorerConfig { beta: 0.0, beam_size: k, ..ScorerConfig::new(ScorerKind::Global) };
        let out = beam_search(&model, &inst.source, &inst.global_attention, &cfg).unwrap();
        for h in &out.pool {
            prop_assert!((h.hypothesis.joint - h.hypothesis.logprob).abs() <= 1e-9);
            prop_assert!((h.hypothesis.joint - h.hypothesis.recomputed_joint()).abs() <= 1e-9);
        }
    }

    #[test]
    fn decoding_is_deterministic(model in model_strategy(), instance in any::<u64>(), k in 1usize..5, scorer in 0usize..6) {
        let inst = model.sample_instance(instance).unwrap();
        let cfg = ScorerConfig { beam_size: k, trace: true, ..ScorerConfig::new(ScorerKind::ALL[scorer]) };
        let a = beam_search(&model, &inst.source, &inst.global_attention, &cfg).unwrap();
        let b = beam_search(&model, &inst.source, &inst.global_attention, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn rouge_bounds_and_f1_identity(
        reference in prop::collection::vec(0u32..6, 1..15),
        hypothesis in prop::collection::vec(0u32..6, 0..15),
        n in 1usize..4,
    ) {
        for order in [RougeOrder::N(n), RougeOrder::L] {
            let s = rouge(&tokens(&reference), &tokens(&hypothesis), order).unwrap();
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let f1 = if s.precision + s.recall > 0.0 { 2.0 * s.precision * s.recall / (s.precision + s.recall) } else { 0.0 };
            prop_assert_eq!(s.f1, f1);
        }
        let self_score = rouge(&tokens(&reference), &tokens(&reference), RougeOrder::L).unwrap();
        prop_assert_eq!(self_score.f1, 1.0);
    }

    #[test]
    fn predictions_are_positive_and_sum_to_length_target(
        weights in prop::collection::vec(-3.0f64..3.0, 4),
        bias in -5.0f64..5.0,
        features in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 4), 1..12),
    ) {
        let params = PredictorParams { weights, bias: Bias::Shared(bias), settings: TrainSettings::default(), losses: vec![] };
        let source = SourceDocument::with_features(vec![Token(0); features.len()], features).unwrap();
        let p = predict(&params, &source).unwrap();
        prop_assert!(p.values.iter().all(|v| *v > 0.0));
        prop_assert!((p.predicted_optimal_length - p.values.iter().sum::<f64>()).abs() <= 1e-9);
    }

    #[test]
    fn experiment_records_round_trip(
        hypothesis in prop::collection::vec(0u32..100, 1..20),
        score in -1e3f64..1e3,
        z in 0.1f64..50.0,
        forced in any::<bool>(),
    ) {
        let record = ExperimentRecord {
            id: "x".into(),
            config: ScorerConfig::default(),
            g_mode: "oracle".into(),
            length: hypothesis.len(),
            hypothesis,
            final_score: score,
            attention_score: 0.5,
            attention_product: Some(0.25),
            z,
            forced,
            wall_time_ms: 1.5,
        };
        let text = serde_json::to_string(&record).unwrap();
        let back: ExperimentRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, record);
    }
}
