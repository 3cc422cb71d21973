//! `gbeam`: decode, search, train and evaluate from the command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or any other error, 2 when
//! `verify` finds a failing property.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use global_beam::attention::{token_ids, Token};
use global_beam::eval::{
    decode_dataset, length_stats, novel_word_pct, read_jsonl, resolve_global_attention, rouge,
    run_degradation, run_sweep, synthetic_dataset, write_jsonl, GMode, GSource, Instance,
    ResultRecord, RougeOrder, DEFAULT_BETAS, DEFAULT_GAMMAS,
};
use global_beam::model::{teacher_forced_global_attention, Model, ModelFile};
use global_beam::predictor::{predict, r_squared, train, Example, PredictorParams, TrainSettings};
use global_beam::scoring::attention_score_raw;
use global_beam::search::exhaustive_oracle;
use global_beam::verify::{run_all, VerifySettings};
use global_beam::{ScorerConfig, ScorerKind, SyntheticModel, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "gbeam",
    version,
    about = "Global-aware beam search experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode every instance of a dataset.
    Decode(DecodeArgs),
    /// Exhaustive search for the best sequence under the configured objective.
    Oracle {
        #[command(flatten)]
        decode: DecodeArgs,
        /// Longest generated length searched; defaults to the step cap.
        #[arg(long)]
        l_max: Option<usize>,
    },
    /// Fit the global-attention predictor.
    TrainPredictor(TrainArgs),
    /// Check the scoring identities and search guarantees.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a result file against references.
    Eval {
        /// Instance file holding the references.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Result file produced by `decode`.
        #[arg(long)]
        hyp: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Grid search over beta and gamma.
    Sweep {
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Per-beam-size comparison of beam search and global-aware search.
    Degradation {
        #[command(flatten)]
        decode: DecodeArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        beam_sizes: Vec<usize>,
    },
    /// Write a synthetic model file and a dataset sampled from it.
    Generate(GenerateArgs),
}

#[derive(Args, Clone)]
struct DecodeArgs {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Instance file (JSONL).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "global")]
    scorer: ScorerKind,
    #[arg(long, default_value_t = 12.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    beam_size: usize,
    #[arg(long, default_value = "oracle")]
    g_mode: GMode,
    /// Noise scale for `--g-mode corrupted`.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    block_length: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    min_length: Option<usize>,
    /// Length-normalization exponent for the baseline scorers.
    #[arg(long = "a", default_value_t = 1.0)]
    length_penalty: f64,
    #[arg(long)]
    repetition_theta: Option<f64>,
    /// Use the global attention as the per-token coverage threshold.
    #[arg(long)]
    coverage_uses_global: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Predictor checkpoint for `--g-mode predicted`.
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DecodeArgs {
    fn config(&self) -> Result<ScorerConfig> {
        let config = ScorerConfig {
            scorer: self.scorer,
            beta: self.beta,
            gamma: self.gamma,
            length_penalty: self.length_penalty,
            beam_size: self.beam_size,
            repetition_theta: self.repetition_theta,
            block_length: self.block_length,
            max_steps: self.max_steps,
            min_length: self.min_length,
            coverage_uses_global: self.coverage_uses_global,
            seed: self.seed,
            ..ScorerConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    fn load(&self) -> Result<(Model, Vec<Instance>, Option<PredictorParams>)> {
        let model = ModelFile::load(&self.model)
            .and_then(ModelFile::build)
            .with_context(|| format!("loading model {}", self.model.display()))?;
        let instances: Vec<Instance> = read_jsonl(&self.data)?;
        if instances.is_empty() {
            bail!("{} holds no instances", self.data.display());
        }
        let predictor = match &self.predictor {
            Some(path) => Some(
                PredictorParams::load(path)
                    .with_context(|| format!("loading {}", path.display()))?,
            ),
            None => None,
        };
        if self.g_mode == GMode::Predicted && predictor.is_none() {
            bail!("--g-mode predicted needs --predictor");
        }
        Ok((model, instances, predictor))
    }

    fn gsource<'a>(&self, predictor: Option<&'a PredictorParams>) -> GSource<'a> {
        GSource {
            mode: self.g_mode,
            predictor,
            sigma: self.sigma,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Instance file with features and either `global_attention` or a reference.
    #[arg(long)]
    data: PathBuf,
    /// Model used to teacher-force references lacking `global_attention`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = TrainSettings::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainSettings::default().lr_decay)]
    lr_decay: f64,
    #[arg(long, default_value_t = TrainSettings::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Average each feature vector with its neighbours before the linear head.
    #[arg(long)]
    context_window: bool,
    /// Fraction of instances held out for the R² report.
    #[arg(long, default_value_t = 0.0)]
    holdout: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Instance seed of the first sample.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SyntheticSpec::default().vocab_size)]
    vocab_size: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().source_len)]
    source_len: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().feature_dim)]
    feature_dim: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().salience_mean)]
    salience_mean: f64,
    /// Where to write the model description.
    #[arg(long)]
    model_out: PathBuf,
    /// Where to write the instances.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Decode(args) => decode(&args)?,
        Command::Oracle { decode, l_max } => oracle(&decode, l_max)?,
        Command::TrainPredictor(args) => train_predictor(&args)?,
        Command::Verify {
            pairs,
            instances,
            seed,
        } => {
            return Ok(verify(VerifySettings {
                pairs,
                instances,
                seed,
            }))
        }
        Command::Eval {
            reference,
            hyp,
            json,
        } => eval(&reference, &hyp, json)?,
        Command::Sweep {
            decode,
            betas,
            gammas,
        } => sweep(&decode, betas, gammas)?,
        Command::Degradation { decode, beam_sizes } => degradation(&decode, &beam_sizes)?,
        Command::Generate(args) => generate(&args)?,
    }
    Ok(ExitCode::SUCCESS)
}

// ── Output helpers ──

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_records(path: Option<&Path>, records: &[ResultRecord]) -> Result<()> {
    let mut out = open_out(path)?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

// ── Subcommands ──

fn decode(args: &DecodeArgs) -> Result<()> {
    let config = args.config()?;
    let (model, instances, predictor) = args.load()?;
    let records = decode_dataset(
        &model,
        &instances,
        &config,
        &args.gsource(predictor.as_ref()),
    )?;
    let results: Vec<ResultRecord> = records.iter().map(ResultRecord::from).collect();
    write_records(args.out.as_deref(), &results)
}

fn oracle(args: &DecodeArgs, l_max: Option<usize>) -> Result<()> {
    let config = args.config()?;
    let (model, instances, predictor) = args.load()?;
    let gsrc = args.gsource(predictor.as_ref());
    let mut results = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let g = resolve_global_attention(&model, inst, i, &gsrc)?;
        let limit = l_max.unwrap_or_else(|| config.resolved_max_steps(g.optimal_length()));
        let source = inst.source_document()?;
        let out = exhaustive_oracle(&model, &source, &g, &config, limit)
            .with_context(|| format!("instance {}", inst.id))?;
        let h = &out.best.hypothesis;
        results.push(ResultRecord {
            id: inst.id.clone(),
            hypothesis: token_ids(&h.tokens),
            final_score: out.best.score,
            attention_score: attention_score_raw(h.ledger.local(), h.ledger.total(), g.values())?,
            length: h.len(),
            z: g.optimal_length(),
            forced: h.forced,
        });
    }
    write_records(args.out.as_deref(), &results)
}

fn train_predictor(args: &TrainArgs) -> Result<()> {
    let instances: Vec<Instance> = read_jsonl(&args.data)?;
    let model = match &args.model {
        Some(path) => Some(ModelFile::load(path)?.build()?),
        None => None,
    };
    let mut examples = Vec::with_capacity(instances.len());
    for inst in &instances {
        let source = inst.source_document()?;
        let target = match (inst.provided_attention()?, &model, inst.reference_tokens()) {
            (Some(g), _, _) => g,
            (None, Some(m), Some(reference)) => {
                teacher_forced_global_attention(m, &source, &reference)?
            }
            _ => bail!(
                "instance {} has no global_attention (pass --model to teacher-force its reference)",
                inst.id
            ),
        };
        examples.push(Example { source, target });
    }
    if !(0.0..1.0).contains(&args.holdout) {
        bail!("--holdout must lie in [0, 1)");
    }
    let split = examples.len() - (examples.len() as f64 * args.holdout).round() as usize;
    let (train_set, held_out) = examples.split_at(split);
    let settings = TrainSettings {
        learning_rate: args.lr,
        lr_decay: args.lr_decay,
        epochs: args.epochs,
        seed: args.seed,
        context_window: args.context_window,
    };
    let params = train(PredictorParams::init(train_set, settings)?, train_set)?;
    if let (Some(first), Some(last)) = (params.losses.first(), params.losses.last()) {
        eprintln!("training loss {first:.6} -> {last:.6}");
    }
    if !held_out.is_empty() {
        let mut r2 = 0.0;
        for ex in held_out {
            r2 += r_squared(ex.target.values(), &predict(&params, &ex.source)?.values)?;
        }
        eprintln!(
            "held-out mean R^2 {:.4} over {} instances",
            r2 / held_out.len() as f64,
            held_out.len()
        );
    }
    params.save(&args.out)?;
    Ok(())
}

fn verify(settings: VerifySettings) -> ExitCode {
    let outcomes = run_all(&settings);
    for o in &outcomes {
        println!(
            "{:<4} {:<24} {}",
            if o.passed { "ok" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn strip_eos(tokens: &[u32]) -> Vec<Token> {
    tokens[..tokens.len().saturating_sub(1)]
        .iter()
        .copied()
        .map(Token)
        .collect()
}

fn eval(reference: &Path, hyp: &Path, json: bool) -> Result<()> {
    let instances: Vec<Instance> = read_jsonl(reference)?;
    let results: Vec<ResultRecord> = read_jsonl(hyp)?;
    if results.is_empty() {
        bail!("{} holds no results", hyp.display());
    }
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let orders = [RougeOrder::N(1), RougeOrder::N(2), RougeOrder::L];
    let mut sums = [[0.0; 3]; 3];
    let mut novel = 0.0;
    for r in &results {
        let inst = by_id
            .get(r.id.as_str())
            .with_context(|| format!("no reference instance with id {}", r.id))?;
        let reference = inst
            .reference
            .as_deref()
            .with_context(|| format!("instance {} has no reference", r.id))?;
        let (reference, content) = (strip_eos(reference), strip_eos(&r.hypothesis));
        for (sum, order) in sums.iter_mut().zip(orders) {
            let s = rouge(&reference, &content, order)?;
            sum[0] += s.precision;
            sum[1] += s.recall;
            sum[2] += s.f1;
        }
        let source: Vec<Token> = inst.source.iter().copied().map(Token).collect();
        novel += if content.is_empty() {
            0.0
        } else {
            novel_word_pct(&source, &content)?
        };
    }
    let n = results.len() as f64;
    let lengths = length_stats(&results.iter().map(|r| (r.length, r.z)).collect::<Vec<_>>())?;
    if json {
        let rouge_json: serde_json::Map<String, serde_json::Value> = orders
            .iter()
            .zip(&sums)
            .map(|(o, s)| {
                (
                    o.to_string(),
                    serde_json::json!({"precision": s[0] / n, "recall": s[1] / n, "f1": s[2] / n}),
                )
            })
            .collect();
        let report = serde_json::json!({
            "count": results.len(),
            "rouge": rouge_json,
            "novel_pct": novel / n,
            "mean_length": lengths.mean_length,
            "mean_deviation": lengths.mean_deviation,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "{:<8} {:>9} {:>9} {:>9}",
            "metric", "precision", "recall", "f1"
        );
        for (o, s) in orders.iter().zip(&sums) {
            println!(
                "{:<8} {:>9.4} {:>9.4} {:>9.4}",
                o.to_string(),
                s[0] / n,
                s[1] / n,
                s[2] / n
            );
        }
        println!();
        println!("instances        {}", results.len());
        println!("novel words (%)  {:.2}", novel / n);
        println!("mean length      {:.3}", lengths.mean_length);
        println!("mean |len - Z|   {:.3}", lengths.mean_deviation);
    }
    Ok(())
}

fn sweep(args: &DecodeArgs, betas: Option<Vec<f64>>, gammas: Option<Vec<f64>>) -> Result<()> {
    let config = args.config()?;
    let (model, instances, predictor) = args.load()?;
    let betas = betas.unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    let gammas = gammas.unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
    let rows = run_sweep(
        &model,
        &instances,
        &betas,
        &gammas,
        &config,
        &args.gsource(predictor.as_ref()),
    )?;
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{:>6} {:>6} {:>7} {:>7} {:>7} {:>7} {:>8}",
        "beta", "gamma", "R-1", "R-2", "R-L", "len", "|len-Z|"
    );
    for r in &rows {
        let m = &r.metrics;
        println!(
            "{:>6} {:>6} {:>7} {:>7} {:>7} {:>7.2} {:>8.3}",
            r.beta,
            r.gamma,
            fmt(m.rouge1),
            fmt(m.rouge2),
            fmt(m.rouge_l),
            m.mean_length,
            m.mean_deviation
        );
    }
    if let Some(path) = &args.out {
        write_json(path, &rows)?;
    }
    Ok(())
}

fn degradation(args: &DecodeArgs, beam_sizes: &[usize]) -> Result<()> {
    let config = args.config()?;
    let (model, instances, predictor) = args.load()?;
    let report = run_degradation(&model, &instances, beam_sizes, &config, predictor.as_ref())?;
    print!("{}", report.to_table());
    println!(
        "exhaustive-feasible instances: {}/{}",
        report.exhaustive_feasible,
        instances.len()
    );
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        seed: args.seed,
        vocab_size: args.vocab_size,
        source_len: args.source_len,
        feature_dim: args.feature_dim,
        salience_mean: args.salience_mean,
        ..SyntheticSpec::default()
    };
    let model = SyntheticModel::new(spec.clone())?;
    let instances = synthetic_dataset(&model, args.count, args.first_seed)?;
    write_json(&args.model_out, &ModelFile::Synthetic { synthetic: spec })?;
    write_jsonl(&args.out, &instances)?;
    Ok(())
}
