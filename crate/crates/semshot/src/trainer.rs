//! Episodic meta-training: per-episode SGD on the mean query cross-entropy,
//! learning-rate halving on a fixed schedule, validation after every epoch,
//! and best-checkpoint retention. Also hosts the α grid search.

use thiserror::Error;

use crate::databank::{FeatureBank, Split};
use crate::episodes::{inject_noise, sample_episode, EpisodeError, NoiseConfig};
use crate::eval::{evaluate, EvalConfig, EvalError, EvalResult};
use crate::gradcore::{sgd_step, GradError, Mode, NodeId, RngStream};
use crate::model::{
    episode_forward, EpisodeForward, HeadParams, MixConfig, VariantId, DEFAULT_ATTN_WIDTH,
};
use crate::semstore::EmbeddingTable;

/// Validation episodes are sampled from a constant seed so model selection
/// is comparable across runs and α grid points.
pub const VALIDATION_SEED: u64 = 600_600;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(
        "non-finite loss {loss} at epoch {epoch}, episode {episode}; parameter norms: {norms}"
    )]
    NonFiniteLoss {
        epoch: usize,
        episode: usize,
        loss: f64,
        norms: String,
    },
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub variant: VariantId,
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub val_episodes: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_halving_period_epochs: usize,
    pub attn_width: usize,
    pub mix: MixConfig,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Standard episodic-training defaults for everything except the task
    /// shape and epoch count, which have no universal setting.
    pub fn new(variant: VariantId, ways: usize, shots: usize, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            variant,
            ways,
            shots,
            queries: 15,
            epochs,
            episodes_per_epoch: 100,
            val_episodes: 600,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_halving_period_epochs: 40,
            attn_width: DEFAULT_ATTN_WIDTH,
            mix: MixConfig::default(),
            noise: NoiseConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.ways == 0
            || self.shots == 0
            || self.queries == 0
            || self.episodes_per_epoch == 0
            || self.val_episodes == 0
            || self.lr_halving_period_epochs == 0
            || self.attn_width == 0
        {
            return Err(TrainError::Config(
                "all counts in the training config must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0) || !(self.momentum >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config(
                "lr, momentum and weight decay must be non-negative".into(),
            ));
        }
        self.mix.validate()?;
        if self.noise.enabled {
            self.noise.validate(self.shots)?;
        }
        Ok(())
    }
}

/// One epoch's summary line.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: f64,
}

impl TrainLog {
    /// One epoch per line, key=value fields; floats at round-trip precision
    /// so two runs can be compared for bit-identity as text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&format!(
                "epoch={} train_loss={} val_acc={} lr={}\n",
                r.epoch, r.mean_train_loss, r.val_accuracy, r.lr
            ));
        }
        match self.best_epoch {
            Some(e) => out.push_str(&format!(
                "best_epoch={} best_val_acc={}\n",
                e, self.best_val_accuracy
            )),
            None => out.push_str("best_epoch=none\n"),
        }
        out
    }
}

/// lr·2^(−⌊epoch/period⌋), the halving schedule.
pub fn effective_lr(lr: f64, epoch: usize, period: usize) -> f64 {
    lr * f64::powi(2.0, -((epoch / period) as i32))
}

/// Forward an episode in train mode and append the Eq.-1 style loss: mean
/// cross-entropy of each query row against its true class.
pub fn episode_loss(
    episode: &crate::episodes::Episode,
    heads: &HeadParams,
    variant: VariantId,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(EpisodeForward, NodeId), GradError> {
    let fwd = episode_forward(episode, heads, variant, mode, rng)?;
    let loss = fwd
        .graph
        .cross_entropy_mean(fwd.logits, &episode.query_labels())?;
    Ok((fwd, loss))
}

fn param_norms(heads: &HeadParams) -> String {
    heads
        .parameters()
        .iter()
        .map(|p| {
            let n: f64 = p.value.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            format!("{}={:.4}", p.name, n)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Evaluate frozen heads on the val split with the fixed validation seed.
/// Noise injection follows the training config, so model selection sees the
/// same task distribution that training targets.
pub fn validate(
    bank: &FeatureBank,
    table: &EmbeddingTable,
    heads: &HeadParams,
    cfg: &TrainConfig,
) -> Result<EvalResult, TrainError> {
    let view = bank.split_view(Split::Val);
    let eval_cfg = EvalConfig {
        variant: cfg.variant,
        ways: cfg.ways,
        shots: cfg.shots,
        queries: cfg.queries,
        n_tasks: cfg.val_episodes,
        noise: cfg.noise,
        seed: VALIDATION_SEED,
    };
    Ok(evaluate(&view, table, heads, &eval_cfg)?)
}

/// Meta-train on the bank's train split. Returns the best-validation
/// parameters (falling back to the final initialization when epochs = 0)
/// and the per-epoch log.
pub fn train(
    bank: &FeatureBank,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
) -> Result<(HeadParams, TrainLog), TrainError> {
    cfg.validate()?;
    let d_e = table.d_e();
    let mut heads = HeadParams::init(
        bank.d_v(),
        d_e,
        cfg.attn_width,
        cfg.mix,
        &mut RngStream::new(cfg.seed, "train/init"),
    )?;
    let train_view = bank.split_view(Split::Train);

    let mut log = TrainLog::default();
    let mut best = heads.clone();
    let mut best_acc = f64::NEG_INFINITY;

    for epoch in 0..cfg.epochs {
        let lr = effective_lr(cfg.lr, epoch, cfg.lr_halving_period_epochs);
        let mut loss_sum = 0.0;

        for ep_idx in 0..cfg.episodes_per_epoch {
            let mut rng = RngStream::new(cfg.seed, &format!("train/epoch{epoch}/ep{ep_idx}"));
            let mut episode = sample_episode(
                &train_view,
                table,
                cfg.ways,
                cfg.shots,
                cfg.queries,
                &mut rng,
            )?;
            if cfg.noise.enabled {
                episode = inject_noise(&train_view, episode, &cfg.noise, &mut rng)?.0;
            }
            let mut drop_rng = rng.substream("dropout");
            let (fwd, loss_node) =
                episode_loss(&episode, &heads, cfg.variant, Mode::Train, &mut drop_rng)?;
            let loss = fwd.graph.scalar_value(loss_node)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    episode: ep_idx,
                    loss,
                    norms: param_norms(&heads),
                });
            }
            loss_sum += loss;

            fwd.graph.backward(loss_node)?;
            heads.zero_grads();
            heads.absorb_grads(&fwd.graph, &fwd.bound);
            let mut params = heads.parameters_mut();
            sgd_step(&mut params, lr, cfg.momentum, cfg.weight_decay);
        }

        let val = validate(bank, table, &heads, cfg)?;
        log.epochs.push(EpochRecord {
            epoch,
            mean_train_loss: loss_sum / cfg.episodes_per_epoch as f64,
            val_accuracy: val.mean_accuracy,
            lr,
        });
        if val.mean_accuracy > best_acc {
            best_acc = val.mean_accuracy;
            best = heads.clone();
            log.best_epoch = Some(epoch);
            log.best_val_accuracy = val.mean_accuracy;
        }
    }

    Ok((best, log))
}

/// Train one model per grid value with a shared seed and pick the α with
/// the best validation accuracy; ties go to the smaller α.
pub fn select_alpha(
    bank: &FeatureBank,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>), TrainError> {
    if grid.is_empty() {
        return Err(TrainError::Config("empty alpha grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid values"));
    let mut scores = Vec::with_capacity(sorted.len());
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &alpha in &sorted {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(TrainError::Config(format!(
                "alpha grid value {alpha} outside [0, 1]"
            )));
        }
        let mut run_cfg = cfg.clone();
        run_cfg.mix.alpha = alpha;
        let (_, log) = train(bank, table, &run_cfg)?;
        let acc = log.best_val_accuracy;
        scores.push((alpha, acc));
        // ascending grid + strict inequality → ties keep the smaller alpha
        if acc > best.1 {
            best = (alpha, acc);
        }
    }
    Ok((best.0, scores))
}

/// Outcome of the whole-model finite-difference suite.
#[derive(Clone, Debug)]
pub struct GradcheckSummary {
    pub instances: usize,
    pub coords_checked: usize,
    pub worst_rel_err: f64,
    pub worst_param: String,
}

/// Finite-difference checks of the full episode loss, cycling through every
/// variant over freshly sampled (episode, head-init) instances on a small
/// synthetic bank. Dropout is off so the loss is a deterministic function of
/// the parameters.
pub fn run_gradcheck(seed: u64, instances: usize, tol: f64) -> Result<GradcheckSummary, TrainError> {
    use crate::databank::{synth_generate, SynthSpec};
    use crate::gradcore::{finite_diff_check, DEFAULT_EPS};

    let spec = SynthSpec {
        n_classes: 6,
        samples_per_class: 12,
        d_v: 8,
        d_e: 6,
        split_fractions: (1.0, 0.0),
        seed,
        ..SynthSpec::default()
    };
    let (bank, table) =
        synth_generate(&spec).map_err(|e| TrainError::Config(format!("gradcheck bank: {e}")))?;
    let view = bank.split_view(Split::Train);

    let mut summary = GradcheckSummary {
        instances,
        coords_checked: 0,
        worst_rel_err: 0.0,
        worst_param: String::new(),
    };

    for i in 0..instances {
        let variant = VariantId::ALL[i % VariantId::ALL.len()];
        let mut rng = RngStream::new(seed, &format!("gradcheck/{i}"));
        let episode = sample_episode(&view, &table, 3, 2, 4, &mut rng)?;
        let mut heads = HeadParams::init(
            8,
            6,
            4,
            MixConfig::default(),
            &mut rng.substream("init"),
        )?;
        let mut params: Vec<_> = heads.parameters().into_iter().cloned().collect();
        let report = finite_diff_check(
            &mut params,
            |ps| {
                for (dst, src) in heads.parameters_mut().into_iter().zip(ps.iter()) {
                    dst.value.data_mut().copy_from_slice(src.value.data());
                }
                let mut drop_rng = RngStream::new(0, "gradcheck/drop");
                let (fwd, loss) =
                    episode_loss(&episode, &heads, variant, Mode::Eval, &mut drop_rng)?;
                let value = fwd.graph.scalar_value(loss)?;
                fwd.graph.backward(loss)?;
                heads.zero_grads();
                heads.absorb_grads(&fwd.graph, &fwd.bound);
                for (src, dst) in heads.parameters().iter().zip(ps.iter_mut()) {
                    dst.grad.data_mut().copy_from_slice(src.grad.data());
                }
                Ok(value)
            },
            DEFAULT_EPS,
            tol,
            None,
            &mut rng.substream("coords"),
        )?;
        summary.coords_checked += report.checked;
        if report.worst_rel_err > summary.worst_rel_err {
            summary.worst_rel_err = report.worst_rel_err;
            summary.worst_param = format!("{} ({variant})", report.worst_param);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::databank::{synth_generate, SynthSpec};
    use crate::episodes::{Episode, QueryRecord, SupportRecord};
    use crate::semstore::EmbeddingTable;

    fn toy_setup() -> (FeatureBank, EmbeddingTable) {
        let spec = SynthSpec {
            n_classes: 15,
            samples_per_class: 20,
            d_v: 8,
            d_e: 6,
            seed: 11,
            ..SynthSpec::default()
        };
        synth_generate(&spec).unwrap()
    }

    fn toy_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::new(VariantId::Pn, 3, 2, 2, 5);
        cfg.queries = 4;
        cfg.episodes_per_epoch = 5;
        cfg.val_episodes = 10;
        cfg
    }

    #[test]
    fn lr_schedule_is_exact() {
        assert_eq!(effective_lr(0.02, 0, 40), 0.02);
        assert_eq!(effective_lr(0.02, 39, 40), 0.02);
        assert_eq!(effective_lr(0.02, 40, 40), 0.01);
        assert_eq!(effective_lr(0.02, 80, 40), 0.005);
        assert_eq!(effective_lr(0.02, 129, 40), 0.02 * 0.125);
    }

    #[test]
    fn zero_epochs_returns_init_unchanged() {
        let (bank, table) = toy_setup();
        let mut cfg = toy_cfg();
        cfg.epochs = 0;
        let (heads, log) = train(&bank, &table, &cfg).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(log.best_epoch, None);
        let init = HeadParams::init(
            bank.d_v(),
            table.d_e(),
            cfg.attn_width,
            cfg.mix,
            &mut RngStream::new(cfg.seed, "train/init"),
        )
        .unwrap();
        assert_eq!(heads.named_values(), init.named_values());
    }

    #[test]
    fn zero_lr_keeps_params_bit_identical() {
        let (bank, table) = toy_setup();
        let mut cfg = toy_cfg();
        cfg.lr = 0.0;
        cfg.epochs = 1;
        let (heads, _) = train(&bank, &table, &cfg).unwrap();
        let init = HeadParams::init(
            bank.d_v(),
            table.d_e(),
            cfg.attn_width,
            cfg.mix,
            &mut RngStream::new(cfg.seed, "train/init"),
        )
        .unwrap();
        for ((na, _, va), (nb, _, vb)) in heads.named_values().iter().zip(init.named_values()) {
            assert_eq!(*na, nb);
            for (x, y) in va.iter().zip(&vb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn training_replay_is_bit_identical() {
        let (bank, table) = toy_setup();
        let mut cfg = toy_cfg();
        cfg.variant = VariantId::Combined;
        let (h1, l1) = train(&bank, &table, &cfg).unwrap();
        let (h2, l2) = train(&bank, &table, &cfg).unwrap();
        assert_eq!(l1.to_text(), l2.to_text());
        assert_eq!(h1.named_values(), h2.named_values());
    }

    #[test]
    fn episode_loss_is_ln_ways_for_indistinct_classes() {
        // identical support and queries in every class → uniform scores
        let feature = vec![0.25; 4];
        let ways = 3;
        let episode = Episode {
            ways,
            shots: 2,
            queries_per_class: 1,
            class_names: (0..ways).map(|c| format!("c{c}")).collect(),
            class_embeddings: vec![vec![0.1, 0.2]; ways],
            support: (0..ways)
                .map(|c| {
                    (0..2)
                        .map(|_| SupportRecord {
                            feature: feature.clone(),
                            presented_class: c,
                            true_class: c,
                        })
                        .collect()
                })
                .collect(),
            query: (0..ways)
                .map(|c| QueryRecord {
                    feature: feature.clone(),
                    true_class: c,
                })
                .collect(),
            view_class_indices: (0..ways).collect(),
            used_samples: vec![Default::default(); ways],
        };
        let heads = HeadParams::init(4, 2, 4, MixConfig::default(), &mut RngStream::new(3, "t"))
            .unwrap();
        let mut rng = RngStream::new(0, "drop");
        let (fwd, loss) =
            episode_loss(&episode, &heads, VariantId::Pn, Mode::Eval, &mut rng).unwrap();
        let got = fwd.graph.scalar_value(loss).unwrap();
        assert!((got - (ways as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn best_val_accuracy_is_max_over_epochs() {
        let (bank, table) = toy_setup();
        let mut cfg = toy_cfg();
        cfg.epochs = 3;
        let (_, log) = train(&bank, &table, &cfg).unwrap();
        let max = log
            .epochs
            .iter()
            .map(|r| r.val_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(log.best_val_accuracy, max);
        let best = log.best_epoch.unwrap();
        assert_eq!(log.epochs[best].val_accuracy, max);
    }

    #[test]
    fn singleton_alpha_grid_returns_its_value() {
        let (bank, table) = toy_setup();
        let mut cfg = toy_cfg();
        cfg.epochs = 1;
        cfg.variant = VariantId::Am3;
        let (alpha, scores) = select_alpha(&bank, &table, &cfg, &[0.5]).unwrap();
        assert_eq!(alpha, 0.5);
        assert_eq!(scores.len(), 1);
        assert!(select_alpha(&bank, &table, &cfg, &[]).is_err());
        assert!(select_alpha(&bank, &table, &cfg, &[1.5]).is_err());
    }

    #[test]
    fn pn_loss_on_fixed_episodes_is_non_increasing() {
        // pn's logits depend only on the support features, so on a fixed
        // episode set the per-epoch mean loss is constant under a small lr
        let (bank, table) = toy_setup();
        let view = bank.split_view(Split::Train);
        let episodes: Vec<_> = (0..8)
            .map(|i| {
                let mut rng = RngStream::new(21, &format!("fixed/ep{i}"));
                sample_episode(&view, &table, 3, 2, 4, &mut rng).unwrap()
            })
            .collect();
        let mut heads = HeadParams::init(
            bank.d_v(),
            table.d_e(),
            8,
            MixConfig::default(),
            &mut RngStream::new(21, "init"),
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for epoch in 0..6 {
            let mut sum = 0.0;
            for (i, ep) in episodes.iter().enumerate() {
                let mut drop_rng = RngStream::new(21, &format!("drop/{epoch}/{i}"));
                let (fwd, loss) =
                    episode_loss(ep, &heads, VariantId::Pn, Mode::Train, &mut drop_rng).unwrap();
                sum += fwd.graph.scalar_value(loss).unwrap();
                fwd.graph.backward(loss).unwrap();
                heads.zero_grads();
                heads.absorb_grads(&fwd.graph, &fwd.bound);
                sgd_step(&mut heads.parameters_mut(), 1e-3, 0.9, 0.0005);
            }
            let mean = sum / episodes.len() as f64;
            assert!(mean.is_finite());
            assert!(mean <= prev + 1e-12, "epoch {epoch}: {mean} > {prev}");
            prev = mean;
        }
    }
}
