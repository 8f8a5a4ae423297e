//! Evaluation over many sampled tasks: accuracy with a 95% confidence
//! interval, the attention-weight distribution report, and the line-oriented
//! `key=value` report format shared by the CLI subcommands.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::databank::BankView;
use crate::episodes::{inject_noise, sample_episode, EpisodeError, NoiseConfig};
use crate::gradcore::{GradError, Mode, RngStream};
use crate::model::{episode_forward, HeadParams, VariantId};
use crate::semstore::{EmbeddingTable, EmbedError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation config: {0}")]
    Config(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Semantics(#[from] EmbedError),
    #[error("report i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

/// Task-sampling settings shared by `evaluate` and `attention_report`.
#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub variant: VariantId,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub n_tasks: usize,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.ways == 0 || self.shots == 0 || self.queries == 0 || self.n_tasks == 0 {
            return Err(EvalError::Config(
                "ways, shots, queries and n_tasks must all be positive".into(),
            ));
        }
        if self.noise.enabled {
            self.noise
                .validate(self.shots)
                .map_err(EvalError::Episode)?;
        }
        Ok(())
    }
}

/// Accuracy over `n_tasks` sampled tasks, in percent.
#[derive(Clone, Debug)]
pub struct EvalResult {
    pub mean_accuracy: f64,
    pub ci_half_width: f64,
    pub n_tasks: usize,
    pub per_task_accuracies: Vec<f64>,
}

/// Mean and 1.96·σ/√n half-width, σ the population standard deviation.
/// Inputs and outputs are percentages.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Config(
            "confidence interval of an empty list".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, 1.96 * var.sqrt() / n.sqrt()))
}

/// Per-task RNG stream, derived only from the evaluation seed and the task
/// index so tasks are independent and order-insensitive.
fn task_rng(seed: u64, task: usize) -> RngStream {
    RngStream::new(seed, &format!("eval/task{task}"))
}

/// Score `cfg.n_tasks` freshly sampled tasks with frozen parameters in eval
/// mode. Pure in (params, view, config, seed).
pub fn evaluate(
    view: &BankView,
    table: &EmbeddingTable,
    heads: &HeadParams,
    cfg: &EvalConfig,
) -> Result<EvalResult, EvalError> {
    cfg.validate()?;
    let mut accs = Vec::with_capacity(cfg.n_tasks);
    for t in 0..cfg.n_tasks {
        let mut rng = task_rng(cfg.seed, t);
        let mut episode = sample_episode(view, table, cfg.ways, cfg.shots, cfg.queries, &mut rng)?;
        if cfg.noise.enabled {
            episode = inject_noise(view, episode, &cfg.noise, &mut rng)?.0;
        }
        let mut drop_rng = rng.substream("dropout");
        let fwd = episode_forward(&episode, heads, cfg.variant, Mode::Eval, &mut drop_rng)?;
        accs.push(100.0 * fwd.score.accuracy(&episode.query_labels())?);
    }
    let (mean_accuracy, ci_half_width) = confidence_interval(&accs)?;
    Ok(EvalResult {
        mean_accuracy,
        ci_half_width,
        n_tasks: cfg.n_tasks,
        per_task_accuracies: accs,
    })
}

/// One support slot's attention weight in one evaluated task.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub task: usize,
    pub class: usize,
    pub slot: usize,
    pub weight: f64,
    pub is_noisy: bool,
}

/// Attention-weight distribution over clean and noisy support slots.
#[derive(Clone, Debug)]
pub struct AttentionReport {
    pub records: Vec<AttentionRecord>,
    pub bin_width: f64,
    /// Counts per bin [i·w, (i+1)·w); the last bin includes 1.0.
    pub hist_clean: Vec<u64>,
    pub hist_noisy: Vec<u64>,
    pub mean_clean: f64,
    /// NaN-free only when noisy slots exist; None when noise was disabled
    /// or no slot flipped.
    pub mean_noisy: Option<f64>,
}

pub const DEFAULT_ATTENTION_BIN_WIDTH: f64 = 0.05;

/// Collect every support slot's sample-attention weight over `cfg.n_tasks`
/// tasks. Requires a sample-attention variant and k ≥ 2 (with one shot the
/// weight is identically 1).
pub fn attention_report(
    view: &BankView,
    table: &EmbeddingTable,
    heads: &HeadParams,
    cfg: &EvalConfig,
    bin_width: f64,
) -> Result<AttentionReport, EvalError> {
    cfg.validate()?;
    if !cfg.variant.uses_sample_attention() {
        return Err(EvalError::Config(format!(
            "variant '{}' has no sample-attention weights to report",
            cfg.variant
        )));
    }
    if cfg.shots < 2 {
        return Err(EvalError::Config(
            "attention report needs at least 2 shots per class".into(),
        ));
    }
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(EvalError::Config(format!(
            "bin width must lie in (0, 1], got {bin_width}"
        )));
    }

    let n_bins = (1.0 / bin_width).ceil() as usize;
    let mut report = AttentionReport {
        records: Vec::new(),
        bin_width,
        hist_clean: vec![0; n_bins],
        hist_noisy: vec![0; n_bins],
        mean_clean: 0.0,
        mean_noisy: None,
    };
    let (mut sum_clean, mut n_clean) = (0.0, 0u64);
    let (mut sum_noisy, mut n_noisy) = (0.0, 0u64);

    for t in 0..cfg.n_tasks {
        let mut rng = task_rng(cfg.seed, t);
        let mut episode = sample_episode(view, table, cfg.ways, cfg.shots, cfg.queries, &mut rng)?;
        if cfg.noise.enabled {
            episode = inject_noise(view, episode, &cfg.noise, &mut rng)?.0;
        }
        let mut drop_rng = rng.substream("dropout");
        let fwd = episode_forward(&episode, heads, cfg.variant, Mode::Eval, &mut drop_rng)?;
        let attention = fwd
            .attention
            .expect("sample-attention variant yields weights");
        for (c, weights) in attention.iter().enumerate() {
            for (s, &w) in weights.iter().enumerate() {
                let slot = &episode.support[c][s];
                let is_noisy = slot.true_class != slot.presented_class;
                let bin = ((w / bin_width) as usize).min(n_bins - 1);
                if is_noisy {
                    report.hist_noisy[bin] += 1;
                    sum_noisy += w;
                    n_noisy += 1;
                } else {
                    report.hist_clean[bin] += 1;
                    sum_clean += w;
                    n_clean += 1;
                }
                report.records.push(AttentionRecord {
                    task: t,
                    class: c,
                    slot: s,
                    weight: w,
                    is_noisy,
                });
            }
        }
    }

    report.mean_clean = if n_clean > 0 {
        sum_clean / n_clean as f64
    } else {
        0.0
    };
    if n_noisy > 0 {
        report.mean_noisy = Some(sum_noisy / n_noisy as f64);
    }
    Ok(report)
}

// ── Report files ─────────────────────────────────────────────────────

fn fmt_float(v: f64) -> String {
    if v == 0.0 && v.is_sign_negative() {
        "-0.0".into()
    } else {
        let s = format!("{v}");
        if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
            s
        } else {
            format!("{s}.0")
        }
    }
}

/// Serialize namespaced key/value pairs, one `key=value` per line.
pub fn encode_report(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Parse an emitted report back into its pairs. Blank lines are skipped;
/// a line without '=' is an error.
pub fn parse_report(text: &str) -> Result<Vec<(String, String)>, EvalError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| EvalError::Parse {
            line: i + 1,
            detail: format!("expected key=value, got '{line}'"),
        })?;
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

impl EvalResult {
    /// Report pairs under the `eval.` namespace.
    pub fn report_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("eval.mean_acc".into(), fmt_float(self.mean_accuracy)),
            ("eval.ci95".into(), fmt_float(self.ci_half_width)),
            ("eval.n_tasks".into(), self.n_tasks.to_string()),
            ("eval.ci_stddev".into(), "population".into()),
        ]
    }
}

impl AttentionReport {
    /// Report pairs under the `attn.` namespace, histogram bins keyed by
    /// their lower edge.
    pub fn report_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("attn.bin_width".into(), fmt_float(self.bin_width)),
            ("attn.n_records".into(), self.records.len().to_string()),
            ("attn.mean_clean".into(), fmt_float(self.mean_clean)),
            (
                "attn.mean_noisy".into(),
                self.mean_noisy.map(fmt_float).unwrap_or_else(|| "na".into()),
            ),
        ];
        for (i, (&c, &n)) in self.hist_clean.iter().zip(&self.hist_noisy).enumerate() {
            let low = fmt_float(i as f64 * self.bin_width);
            pairs.push((format!("attn.hist.clean.{low}"), c.to_string()));
            pairs.push((format!("attn.hist.noisy.{low}"), n.to_string()));
        }
        pairs
    }
}

/// Convenience lookup over parsed report pairs.
pub fn report_value<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

pub fn write_report(path: &std::path::Path, pairs: &[(String, String)]) -> Result<(), EvalError> {
    Ok(std::fs::write(path, encode_report(pairs))?)
}

pub fn read_report(path: &std::path::Path) -> Result<Vec<(String, String)>, EvalError> {
    parse_report(&std::fs::read_to_string(path)?)
}

/// Map form for consumers that don't care about ordering.
pub fn report_map(pairs: Vec<(String, String)>) -> BTreeMap<String, String> {
    pairs.into_iter().collect()
}
