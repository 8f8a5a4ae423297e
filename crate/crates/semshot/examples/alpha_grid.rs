//! Cross-validate the semantic mixing weight α for the AM3-style variant:
//! one short training run per grid value with a shared seed, best validation
//! accuracy wins (ties to the smaller α).

use semshot::databank::{synth_generate, SynthSpec};
use semshot::model::VariantId;
use semshot::trainer::{select_alpha, TrainConfig};

fn main() {
    let spec = SynthSpec {
        n_classes: 25,
        samples_per_class: 30,
        d_v: 32,
        d_e: 16,
        within_class_std: 0.9,
        seed: 3,
        ..SynthSpec::default()
    };
    let (bank, table) = synth_generate(&spec).expect("generate");

    let mut cfg = TrainConfig::new(VariantId::Am3, 5, 1, 2, 3);
    cfg.queries = 10;
    cfg.episodes_per_epoch = 25;
    cfg.val_episodes = 80;

    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let (best, scores) = select_alpha(&bank, &table, &cfg, &grid).expect("grid search");
    for (alpha, acc) in &scores {
        let marker = if *alpha == best { "  <- selected" } else { "" };
        println!("alpha {alpha:4}  val acc {acc:6.2}{marker}");
    }
}
