//! Evaluate every scoring variant on the same held-out tasks and print
//! accuracy with its 95% confidence interval.

use semshot::databank::{synth_generate, Split, SynthSpec};
use semshot::episodes::NoiseConfig;
use semshot::eval::{evaluate, EvalConfig};
use semshot::model::VariantId;
use semshot::trainer::{train, TrainConfig};

fn main() {
    let spec = SynthSpec {
        n_classes: 25,
        samples_per_class: 30,
        d_v: 32,
        d_e: 16,
        within_class_std: 0.8,
        seed: 9,
        ..SynthSpec::default()
    };
    let (bank, table) = synth_generate(&spec).expect("generate");

    for variant in VariantId::ALL {
        let mut cfg = TrainConfig::new(variant, 5, 1, 3, 9);
        cfg.queries = 10;
        cfg.episodes_per_epoch = 30;
        cfg.val_episodes = 80;
        let (heads, _) = train(&bank, &table, &cfg).expect("train");

        let eval_cfg = EvalConfig {
            variant,
            ways: 5,
            shots: 1,
            queries: 10,
            n_tasks: 300,
            noise: NoiseConfig::default(),
            seed: 2024,
        };
        let result = evaluate(&bank.split_view(Split::Test), &table, &heads, &eval_cfg)
            .expect("evaluate");
        println!(
            "{:<11} {:6.2} +/- {:.2}  ({} tasks)",
            variant.name(),
            result.mean_accuracy,
            result.ci_half_width,
            result.n_tasks
        );
    }
}
