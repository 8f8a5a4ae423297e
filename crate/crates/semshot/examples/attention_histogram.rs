//! Where does the sample attention go? Train on noisy tasks, then histogram
//! the attention weights of clean versus mislabeled support slots.

use semshot::databank::{synth_generate, Split, SynthSpec};
use semshot::episodes::NoiseConfig;
use semshot::eval::{attention_report, EvalConfig, DEFAULT_ATTENTION_BIN_WIDTH};
use semshot::model::VariantId;
use semshot::trainer::{train, TrainConfig};

fn main() {
    let spec = SynthSpec {
        n_classes: 25,
        samples_per_class: 40,
        d_v: 32,
        d_e: 16,
        within_class_std: 0.7,
        seed: 13,
        ..SynthSpec::default()
    };
    let (bank, table) = synth_generate(&spec).expect("generate");
    let noise = NoiseConfig {
        enabled: true,
        min_clean: 3,
        noise_prob: 0.5,
    };

    let mut cfg = TrainConfig::new(VariantId::SampleAtt, 5, 5, 4, 13);
    cfg.queries = 10;
    cfg.episodes_per_epoch = 40;
    cfg.val_episodes = 100;
    cfg.noise = noise;
    let (heads, _) = train(&bank, &table, &cfg).expect("train");

    let eval_cfg = EvalConfig {
        variant: VariantId::SampleAtt,
        ways: 5,
        shots: 5,
        queries: 10,
        n_tasks: 100,
        noise,
        seed: 99,
    };
    let report = attention_report(
        &bank.split_view(Split::Test),
        &table,
        &heads,
        &eval_cfg,
        DEFAULT_ATTENTION_BIN_WIDTH,
    )
    .expect("report");

    println!(
        "mean attention: clean {:.4}, noisy {:.4}",
        report.mean_clean,
        report.mean_noisy.expect("noise was enabled")
    );
    let max = report
        .hist_clean
        .iter()
        .chain(&report.hist_noisy)
        .copied()
        .max()
        .unwrap_or(1)
        .max(1);
    for (i, (&c, &n)) in report.hist_clean.iter().zip(&report.hist_noisy).enumerate() {
        let low = i as f64 * report.bin_width;
        let bar = |count: u64| "#".repeat((count * 40 / max) as usize);
        println!("[{low:.2}) clean {:>5} {}", c, bar(c));
        println!("       noisy {:>5} {}", n, bar(n));
    }
}
