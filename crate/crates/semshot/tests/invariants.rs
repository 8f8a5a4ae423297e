//! Property-based checks: episode-protocol invariants under random
//! configurations, permutation equivariance of the scorer, and
//! never-panic fuzzing of the three text/binary decoders.

use proptest::prelude::*;

use semshot::databank::{decode_bank, synth_generate, Split, SynthSpec};
use semshot::episodes::{inject_noise, sample_episode, Episode, NoiseConfig};
use semshot::eval::parse_report;
use semshot::gradcore::{Mode, RngStream};
use semshot::model::{decode_checkpoint, episode_forward, HeadParams, MixConfig, VariantId};

fn bank_12() -> (semshot::databank::FeatureBank, semshot::semstore::EmbeddingTable) {
    let spec = SynthSpec {
        n_classes: 12,
        samples_per_class: 16,
        d_v: 8,
        d_e: 6,
        within_class_std: 0.8,
        split_fractions: (1.0, 0.0),
        seed: 31,
        ..SynthSpec::default()
    };
    synth_generate(&spec).unwrap()
}

fn variant_strategy() -> impl Strategy<Value = VariantId> {
    prop::sample::select(VariantId::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn episode_sampler_invariants(
        ways in 2usize..=6,
        shots in 1usize..=4,
        queries in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let (bank, table) = bank_12();
        let view = bank.split_view(Split::Train);
        let mut rng = RngStream::new(seed, "prop-ep");
        let ep = sample_episode(&view, &table, ways, shots, queries, &mut rng).unwrap();

        prop_assert_eq!(ep.ways, ways);
        prop_assert_eq!(ep.support.len(), ways);
        prop_assert_eq!(ep.class_embeddings.len(), ways);
        prop_assert_eq!(ep.query.len(), ways * queries);
        // class identities are distinct
        let mut seen = ep.view_class_indices.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), ways);
        for (c, group) in ep.support.iter().enumerate() {
            prop_assert_eq!(group.len(), shots);
            for r in group {
                prop_assert_eq!(r.feature.len(), 8);
                prop_assert_eq!(r.presented_class, c);
                prop_assert_eq!(r.true_class, c);
            }
            // support and query draws never reuse a sample
            prop_assert_eq!(ep.used_samples[c].len(), shots + queries);
        }
        for q in &ep.query {
            prop_assert!(q.true_class < ways);
            prop_assert_eq!(q.feature.len(), 8);
        }
    }

    #[test]
    fn noise_injection_invariants(
        shots in 2usize..=6,
        min_clean in 0usize..=3,
        noise_prob in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (bank, table) = bank_12();
        let view = bank.split_view(Split::Train);
        let mut rng = RngStream::new(seed, "prop-noise");
        let ep = sample_episode(&view, &table, 4, shots, 2, &mut rng).unwrap();
        let before = ep.clone();
        let min_clean = min_clean.min(shots);
        let cfg = NoiseConfig { enabled: true, min_clean, noise_prob };
        let (noisy, report) = inject_noise(&view, ep, &cfg, &mut rng).unwrap();

        prop_assert_eq!(&noisy.query, &before.query);
        let mut flipped = 0usize;
        for (c, (group, orig)) in noisy.support.iter().zip(&before.support).enumerate() {
            let protected = min_clean.min(shots);
            for (s, (r, o)) in group.iter().zip(orig).enumerate() {
                prop_assert_eq!(r.presented_class, c);
                if s < protected {
                    prop_assert_eq!(r, o);
                }
                if r.true_class != c {
                    // a flipped slot carries a real donor sample
                    prop_assert!(r.true_class < 4);
                    prop_assert_ne!(&r.feature, &o.feature);
                    flipped += 1;
                } else {
                    prop_assert_eq!(&r.feature, &o.feature);
                }
            }
        }
        prop_assert_eq!(flipped, report.noisy_slots);
        prop_assert_eq!(
            flipped,
            noisy.noisy_counts().iter().sum::<usize>()
        );
        if noise_prob == 0.0 {
            prop_assert_eq!(flipped, 0);
        }
        let _ = table;
    }

    #[test]
    fn class_permutation_permutes_logits(
        variant in variant_strategy(),
        seed in any::<u64>(),
        rot in 1usize..4,
    ) {
        let (bank, table) = bank_12();
        let view = bank.split_view(Split::Train);
        let mut rng = RngStream::new(seed, "prop-perm");
        let ep = sample_episode(&view, &table, 4, 3, 2, &mut rng).unwrap();
        let heads = HeadParams::init(
            8, 6, 4, MixConfig::default(), &mut RngStream::new(seed, "prop-heads"),
        ).unwrap();

        // rotate the class order by `rot`
        let perm: Vec<usize> = (0..4).map(|c| (c + rot) % 4).collect();
        let mut permuted = Episode {
            support: perm.iter().map(|&p| ep.support[p].clone()).collect(),
            class_embeddings: perm.iter().map(|&p| ep.class_embeddings[p].clone()).collect(),
            class_names: perm.iter().map(|&p| ep.class_names[p].clone()).collect(),
            view_class_indices: perm.iter().map(|&p| ep.view_class_indices[p]).collect(),
            used_samples: perm.iter().map(|&p| ep.used_samples[p].clone()).collect(),
            ..ep.clone()
        };
        for (c, group) in permuted.support.iter_mut().enumerate() {
            for r in group {
                r.presented_class = c;
                r.true_class = c;
            }
        }

        let fwd = |e: &Episode| {
            episode_forward(e, &heads, variant, Mode::Eval, &mut RngStream::new(0, "d"))
                .unwrap()
                .score
                .logits
                .data()
                .to_vec()
        };
        let base = fwd(&ep);
        let shuffled = fwd(&permuted);
        // column j of the permuted logits is column perm[j] of the original
        let n_q = ep.query.len();
        for q in 0..n_q {
            for (j, &p) in perm.iter().enumerate() {
                let a = base[q * 4 + p];
                let b = shuffled[q * 4 + j];
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn bank_decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = decode_bank(&bytes);
    }

    #[test]
    fn bank_decoder_rejects_mutations(flip_at in 0usize..256, xor in 1u8..=255) {
        let (bank, _) = bank_12();
        let mut bytes = semshot::databank::encode_bank(&bank).unwrap();
        let i = flip_at % bytes.len();
        bytes[i] ^= xor;
        // either a clean error or a decode that differs from the original
        if let Ok(back) = decode_bank(&bytes) {
            prop_assert_ne!(back, bank);
        }
    }

    #[test]
    fn report_parser_never_panics(text in "\\PC*") {
        let _ = parse_report(&text);
    }

    #[test]
    fn checkpoint_decoder_never_panics(text in "\\PC*") {
        let _ = decode_checkpoint(&text);
    }
}
