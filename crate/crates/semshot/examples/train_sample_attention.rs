//! Meta-train the sample-attention variant on a small synthetic bank and
//! print the per-epoch log, then save and reload the best checkpoint.

use semshot::databank::{synth_generate, SynthSpec};
use semshot::model::{load_checkpoint, save_checkpoint, Checkpoint, VariantId};
use semshot::trainer::{train, TrainConfig};

fn main() {
    let spec = SynthSpec {
        n_classes: 25,
        samples_per_class: 30,
        d_v: 32,
        d_e: 16,
        within_class_std: 0.6,
        seed: 42,
        ..SynthSpec::default()
    };
    let (bank, table) = synth_generate(&spec).expect("generate");

    let mut cfg = TrainConfig::new(VariantId::SampleAtt, 5, 5, 4, 42);
    cfg.queries = 10;
    cfg.episodes_per_epoch = 40;
    cfg.val_episodes = 100;

    let (heads, log) = train(&bank, &table, &cfg).expect("train");
    print!("{}", log.to_text());

    let path = std::env::temp_dir().join("semshot_sample_att.ckpt");
    save_checkpoint(
        &path,
        &Checkpoint {
            variant: cfg.variant,
            seed: cfg.seed,
            heads,
        },
    )
    .expect("save");
    let back = load_checkpoint(&path).expect("reload");
    println!("checkpoint: {} (variant {})", path.display(), back.variant);
}
