//! Generate a synthetic feature bank with aligned class embeddings, save
//! both to disk, and show that the bank round-trips byte-identically.

use semshot::databank::{load_bank, FeatureBank, Split, SynthSpec};

fn main() {
    let spec = SynthSpec {
        n_classes: 30,
        samples_per_class: 40,
        d_v: 64,
        d_e: 32,
        seed: 7,
        ..SynthSpec::default()
    };
    let (bank, table) = semshot::databank::synth_generate(&spec).expect("generate");

    let dir = std::env::temp_dir().join("semshot_synth_bank_example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let bank_path = dir.join("bank.fbnk");
    let vec_path = dir.join("classes.vec");

    bank.save(&bank_path).expect("save bank");
    table.save(&vec_path).expect("save embeddings");

    let reloaded = load_bank(&bank_path).expect("reload");
    assert_eq!(reloaded, bank, "round trip must be exact");

    print_summary(&bank);
    println!("bank: {}", bank_path.display());
    println!("embeddings: {} ({} tokens)", vec_path.display(), table.len());
}

fn print_summary(bank: &FeatureBank) {
    println!("d_v = {}, {} classes", bank.d_v(), bank.n_classes());
    for split in [Split::Train, Split::Val, Split::Test] {
        let view = bank.split_view(split);
        let samples: usize = view.classes().iter().map(|c| c.n_samples()).sum();
        println!("  {split}: {} classes, {samples} samples", view.n_classes());
    }
}
