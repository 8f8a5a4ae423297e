//! Command-line surface.
//!
//! Subcommands: `bank synth`, `train`, `eval`, `noisy-eval`,
//! `attention-report`, `gradcheck`. Exit codes: 0 success, 1 for
//! validation/config problems (including bad flags), 2 for I/O or file
//! format problems. Numeric output can additionally be written as
//! line-oriented `key=value` text via `--report <path>`.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::databank::{load_bank, save_bank, BankError, FeatureBank, Split, SynthSpec};
use crate::episodes::{EpisodeError, NoiseConfig};
use crate::eval::{
    attention_report, evaluate, write_report, EvalConfig, EvalError, DEFAULT_ATTENTION_BIN_WIDTH,
};
use crate::gradcore::DEFAULT_TOL;
use crate::model::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, MixConfig, VariantId,
};
use crate::semstore::{load_word_vectors, EmbedError, EmbeddingTable};
use crate::trainer::{run_gradcheck, select_alpha, train, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// A CLI failure carrying its process exit code.
#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<BankError> for CliError {
    fn from(e: BankError) -> Self {
        match e {
            BankError::Validation(_) => CliError::usage(e.to_string()),
            _ => CliError::io(e.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Io(_) | EmbedError::Parse { .. } => CliError::io(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) | EvalError::Parse { .. } => CliError::io(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Eval(inner) => inner.into(),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<EpisodeError> for CliError {
    fn from(e: EpisodeError) -> Self {
        CliError::usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "semshot",
    about = "Semantics-driven few-shot classification over feature banks",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Feature bank utilities
    Bank {
        #[command(subcommand)]
        command: BankCommand,
    },
    /// Meta-train a model and write the best checkpoint
    Train(TrainArgs),
    /// Accuracy with a 95% confidence interval over sampled tasks
    Eval(EvalArgs),
    /// Evaluation with label-noise injection into support sets
    NoisyEval(NoisyEvalArgs),
    /// Distribution of sample-attention weights over support slots
    AttentionReport(AttentionArgs),
    /// Finite-difference verification of the analytic gradients
    Gradcheck(GradcheckArgs),
}

#[derive(Subcommand, Debug)]
enum BankCommand {
    /// Generate a synthetic Gaussian-cluster bank (and optional embeddings)
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output bank path
    #[arg(long)]
    out: PathBuf,
    /// Also write the aligned class embeddings as a word-vector text file
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    classes: usize,
    #[arg(long, default_value_t = 40)]
    samples_per_class: usize,
    #[arg(long, default_value_t = 640)]
    d_v: usize,
    #[arg(long, default_value_t = 300)]
    d_e: usize,
    #[arg(long, default_value_t = 1.0)]
    class_mean_scale: f64,
    #[arg(long, default_value_t = 0.35)]
    within_class_std: f64,
    #[arg(long, default_value_t = 0.05)]
    semantic_noise_std: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_fraction: f64,
    #[arg(long, default_value_t = 2.0)]
    outlier_std: f64,
    #[arg(long, default_value_t = 0.6)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.2)]
    val_frac: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "combined")]
    variant: String,
    #[arg(long, default_value_t = 5)]
    ways: usize,
    #[arg(long, default_value_t = 5)]
    shots: usize,
    #[arg(long, default_value_t = 15)]
    queries: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 32.0)]
    dist_scale: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inject support-label noise during training and validation
    #[arg(long, default_value_t = false)]
    noise: bool,
    #[arg(long, default_value_t = 3)]
    min_clean: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_prob: f64,
    /// Best-validation checkpoint destination
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated α grid; when given, one model is trained per value
    /// and the best is kept
    #[arg(long)]
    alpha_grid: Option<String>,
    /// key=value file whose entries override the flags above
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the per-epoch log here in addition to stdout
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    ways: usize,
    #[arg(long, default_value_t = 5)]
    shots: usize,
    #[arg(long, default_value_t = 15)]
    queries: usize,
    #[arg(long, default_value_t = 10_000)]
    n_tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which split to evaluate: train, val or test
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoisyEvalArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, default_value_t = 3)]
    min_clean: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_prob: f64,
}

#[derive(Args, Debug)]
struct AttentionArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Inject support-label noise before reading the attention weights
    #[arg(long, default_value_t = false)]
    noise: bool,
    #[arg(long, default_value_t = 3)]
    min_clean: usize,
    #[arg(long, default_value_t = 0.5)]
    noise_prob: f64,
    #[arg(long, default_value_t = DEFAULT_ATTENTION_BIN_WIDTH)]
    bin_width: f64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tolerance: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parse and run. Returns the process exit code; never panics on bad input.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            }
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bank {
            command: BankCommand::Synth(args),
        } => cmd_bank_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args, None),
        Command::NoisyEval(args) => {
            let noise = NoiseConfig {
                enabled: true,
                min_clean: args.min_clean,
                noise_prob: args.noise_prob,
            };
            cmd_eval(args.eval, Some(noise))
        }
        Command::AttentionReport(args) => cmd_attention(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn load_embeddings(path: &Path) -> Result<EmbeddingTable, CliError> {
    // infer d_e from the first non-empty line
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::io(format!("{}: empty embedding file", path.display())))?;
    let d_e = first.split_whitespace().count().saturating_sub(1);
    if d_e == 0 {
        return Err(CliError::io(format!(
            "{}: first line has no vector values",
            path.display()
        )));
    }
    Ok(load_word_vectors(path, d_e)?)
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    s.parse::<Split>()
        .map_err(|_| CliError::usage(format!("unknown split '{s}' (train, val or test)")))
}

fn bank_view<'a>(bank: &'a FeatureBank, split: Split) -> crate::databank::BankView<'a> {
    bank.split_view(split)
}

fn cmd_bank_synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        n_classes: args.classes,
        samples_per_class: args.samples_per_class,
        d_v: args.d_v,
        d_e: args.d_e,
        class_mean_scale: args.class_mean_scale,
        within_class_std: args.within_class_std,
        semantic_noise_std: args.semantic_noise_std,
        outlier_fraction: args.outlier_fraction,
        outlier_std: args.outlier_std,
        split_fractions: (args.train_frac, args.val_frac),
        seed: args.seed,
    };
    let (bank, table) = crate::databank::synth_generate(&spec)?;
    save_bank(&bank, &args.out)?;
    println!(
        "wrote {} ({} classes x {} samples, d_v={})",
        args.out.display(),
        args.classes,
        args.samples_per_class,
        args.d_v
    );
    if let Some(epath) = &args.embeddings_out {
        table.save(epath)?;
        println!("wrote {} (d_e={})", epath.display(), args.d_e);
    }
    Ok(())
}

/// Apply `key=value` overrides from a config file onto a TrainConfig.
fn apply_config_file(cfg: &mut TrainConfig, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!(
                "{}:{}: expected key=value, got '{line}'",
                path.display(),
                i + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            CliError::usage(format!(
                "{}:{}: invalid {what} '{value}'",
                path.display(),
                i + 1
            ))
        };
        match key {
            "variant" => cfg.variant = value.parse().map_err(|_| bad("variant"))?,
            "ways" => cfg.ways = value.parse().map_err(|_| bad("ways"))?,
            "shots" => cfg.shots = value.parse().map_err(|_| bad("shots"))?,
            "queries" => cfg.queries = value.parse().map_err(|_| bad("queries"))?,
            "epochs" => cfg.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "episodes_per_epoch" => {
                cfg.episodes_per_epoch = value.parse().map_err(|_| bad("episodes_per_epoch"))?
            }
            "val_episodes" => cfg.val_episodes = value.parse().map_err(|_| bad("val_episodes"))?,
            "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
            "momentum" => cfg.momentum = value.parse().map_err(|_| bad("momentum"))?,
            "weight_decay" => cfg.weight_decay = value.parse().map_err(|_| bad("weight_decay"))?,
            "lr_halving_period_epochs" => {
                cfg.lr_halving_period_epochs =
                    value.parse().map_err(|_| bad("lr_halving_period_epochs"))?
            }
            "attn_width" => cfg.attn_width = value.parse().map_err(|_| bad("attn_width"))?,
            "alpha" => cfg.mix.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "dist_scale" => cfg.mix.dist_scale = value.parse().map_err(|_| bad("dist_scale"))?,
            "scale_prior_branch" => {
                cfg.mix.scale_prior_branch =
                    value.parse().map_err(|_| bad("scale_prior_branch"))?
            }
            "noise" => cfg.noise.enabled = value.parse().map_err(|_| bad("noise"))?,
            "min_clean" => cfg.noise.min_clean = value.parse().map_err(|_| bad("min_clean"))?,
            "noise_prob" => cfg.noise.noise_prob = value.parse().map_err(|_| bad("noise_prob"))?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            other => {
                return Err(CliError::usage(format!(
                    "{}:{}: unknown config key '{other}'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let bank = load_bank(&args.bank)?;
    let table = load_embeddings(&args.embeddings)?;
    let variant: VariantId = args
        .variant
        .parse()
        .map_err(|e| CliError::usage(format!("{e}")))?;

    let mut cfg = TrainConfig::new(variant, args.ways, args.shots, args.epochs, args.seed);
    cfg.queries = args.queries;
    cfg.lr = args.lr;
    cfg.mix = MixConfig {
        alpha: args.alpha,
        dist_scale: args.dist_scale,
        scale_prior_branch: false,
    };
    cfg.noise = NoiseConfig {
        enabled: args.noise,
        min_clean: args.min_clean,
        noise_prob: args.noise_prob,
    };
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path)?;
    }

    if let Some(grid_text) = &args.alpha_grid {
        let grid: Vec<f64> = grid_text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("bad alpha grid value '{s}'")))
            })
            .collect::<Result<_, _>>()?;
        let (best_alpha, scores) = select_alpha(&bank, &table, &cfg, &grid)?;
        for (alpha, acc) in &scores {
            println!("alpha={alpha} val_acc={acc}");
        }
        println!("selected alpha={best_alpha}");
        cfg.mix.alpha = best_alpha;
    }

    let (heads, log) = train(&bank, &table, &cfg)?;
    let text = log.to_text();
    print!("{text}");
    if let Some(path) = &args.log {
        std::fs::write(path, &text).map_err(|e| CliError::io(format!("writing log: {e}")))?;
    }
    save_checkpoint(
        &args.out,
        &Checkpoint {
            variant: cfg.variant,
            seed: cfg.seed,
            heads,
        },
    )?;
    println!("wrote {}", args.out.display());

    if let Some(path) = &args.report {
        let mut pairs: Vec<(String, String)> = log
            .epochs
            .iter()
            .flat_map(|r| {
                [
                    (format!("train.epoch{}.loss", r.epoch), format!("{}", r.mean_train_loss)),
                    (format!("train.epoch{}.val_acc", r.epoch), format!("{}", r.val_accuracy)),
                    (format!("train.epoch{}.lr", r.epoch), format!("{}", r.lr)),
                ]
            })
            .collect();
        pairs.push((
            "train.best_epoch".into(),
            log.best_epoch.map_or_else(|| "none".into(), |e| e.to_string()),
        ));
        pairs.push(("train.best_val_acc".into(), format!("{}", log.best_val_accuracy)));
        write_report(path, &pairs)?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs, noise: Option<NoiseConfig>) -> Result<(), CliError> {
    let bank = load_bank(&args.bank)?;
    let table = load_embeddings(&args.embeddings)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let split = parse_split(&args.split)?;
    let noise = noise.unwrap_or(NoiseConfig {
        enabled: false,
        ..NoiseConfig::default()
    });
    let cfg = EvalConfig {
        variant: ckpt.variant,
        ways: args.ways,
        shots: args.shots,
        queries: args.queries,
        n_tasks: args.n_tasks,
        noise,
        seed: args.seed,
    };
    let result = evaluate(&bank_view(&bank, split), &table, &ckpt.heads, &cfg)?;
    println!(
        "accuracy {:.2} +/- {:.2} over {} tasks ({}-way {}-shot, {} split{})",
        result.mean_accuracy,
        result.ci_half_width,
        result.n_tasks,
        args.ways,
        args.shots,
        split,
        if noise.enabled { ", noisy" } else { "" }
    );
    if let Some(path) = &args.report {
        write_report(path, &result.report_pairs())?;
    }
    Ok(())
}

fn cmd_attention(args: AttentionArgs) -> Result<(), CliError> {
    let bank = load_bank(&args.eval.bank)?;
    let table = load_embeddings(&args.eval.embeddings)?;
    let ckpt = load_checkpoint(&args.eval.checkpoint)?;
    let split = parse_split(&args.eval.split)?;
    let cfg = EvalConfig {
        variant: ckpt.variant,
        ways: args.eval.ways,
        shots: args.eval.shots,
        queries: args.eval.queries,
        // attention reporting follows the smaller per-figure sample size,
        // so the generic 10000-task default does not apply
        n_tasks: if args.eval.n_tasks == 10_000 {
            100
        } else {
            args.eval.n_tasks
        },
        noise: NoiseConfig {
            enabled: args.noise,
            min_clean: args.min_clean,
            noise_prob: args.noise_prob,
        },
        seed: args.eval.seed,
    };
    let report = attention_report(
        &bank_view(&bank, split),
        &table,
        &ckpt.heads,
        &cfg,
        args.bin_width,
    )?;
    println!(
        "{} attention records, mean clean {:.4}, mean noisy {}",
        report.records.len(),
        report.mean_clean,
        report
            .mean_noisy
            .map_or_else(|| "n/a".to_string(), |m| format!("{m:.4}")),
    );
    for (i, (&c, &n)) in report
        .hist_clean
        .iter()
        .zip(&report.hist_noisy)
        .enumerate()
    {
        println!(
            "bin [{:.2}, {:.2}) clean={c} noisy={n}",
            i as f64 * report.bin_width,
            (i + 1) as f64 * report.bin_width
        );
    }
    if let Some(path) = &args.eval.report {
        write_report(path, &report.report_pairs())?;
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let summary = run_gradcheck(args.seed, args.instances, args.tolerance)?;
    println!(
        "gradcheck ok: {} instances, {} coordinates, worst rel err {:.3e} ({})",
        summary.instances, summary.coords_checked, summary.worst_rel_err, summary.worst_param
    );
    if let Some(path) = &args.report {
        let pairs = vec![
            ("gradcheck.instances".into(), summary.instances.to_string()),
            ("gradcheck.coords".into(), summary.coords_checked.to_string()),
            (
                "gradcheck.worst_rel_err".into(),
                format!("{}", summary.worst_rel_err),
            ),
            ("gradcheck.tolerance".into(), format!("{}", args.tolerance)),
        ];
        write_report(path, &pairs)?;
    }
    Ok(())
}
