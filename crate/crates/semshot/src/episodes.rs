//! n-way k-shot task sampling and the support label-noise protocol.
//!
//! An episode carries support triples (feature, presented label, true label)
//! and query pairs, plus the class embeddings aligned with the episode's
//! class order. True labels exist only for evaluation and reporting; models
//! never read the true class of a support record.
//!
//! Noise is realized as cross-class feature substitution: a noisy slot is
//! still presented under class c but actually holds a fresh sample of some
//! other episode class d. The first `min_clean` slots of every class are
//! never touched, and each remaining slot flips an independent coin at
//! `noise_prob`, so a 5-shot class with `min_clean = 3` ends up with zero,
//! one or two noisy slots.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::databank::BankView;
use crate::gradcore::RngStream;
use crate::semstore::{EmbedError, EmbeddingTable};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("insufficient {what}: need {required}, have {available}")]
    Insufficient {
        what: String,
        required: usize,
        available: usize,
    },
    #[error("episode configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportRecord {
    pub feature: Vec<f64>,
    /// Label under which the slot is presented to the model.
    pub presented_class: usize,
    /// Actual class of the underlying sample; evaluation-only.
    pub true_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub feature: Vec<f64>,
    pub true_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ways: usize,
    pub shots: usize,
    pub queries_per_class: usize,
    pub class_names: Vec<String>,
    /// n × d_e, row i aligned with episode class i.
    pub class_embeddings: Vec<Vec<f64>>,
    /// n × k support records.
    pub support: Vec<Vec<SupportRecord>>,
    /// n·q query records.
    pub query: Vec<QueryRecord>,
    /// Episode class → index of that class within the sampled view.
    pub view_class_indices: Vec<usize>,
    /// Per episode class, bank sample indices already consumed; donors for
    /// noise injection must avoid these.
    pub used_samples: Vec<BTreeSet<usize>>,
}

impl Episode {
    pub fn n_queries(&self) -> usize {
        self.query.len()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|q| q.true_class).collect()
    }

    /// Count of support slots per class whose true class differs from the
    /// presented one.
    pub fn noisy_counts(&self) -> Vec<usize> {
        self.support
            .iter()
            .map(|slots| {
                slots
                    .iter()
                    .filter(|s| s.true_class != s.presented_class)
                    .count()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub min_clean: usize,
    pub noise_prob: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: false,
            min_clean: 3,
            noise_prob: 0.5,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self, shots: usize) -> Result<(), EpisodeError> {
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(EpisodeError::Config(format!(
                "noise_prob must be in [0,1], got {}",
                self.noise_prob
            )));
        }
        if self.enabled && self.min_clean > shots {
            return Err(EpisodeError::Config(format!(
                "min_clean {} exceeds shots {shots}",
                self.min_clean
            )));
        }
        Ok(())
    }
}

/// What happened during one noise injection pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoiseReport {
    pub noisy_slots: usize,
    /// Slots whose uniformly chosen donor was exhausted and another class
    /// supplied the sample instead.
    pub donor_fallbacks: usize,
    /// Slots left clean because no donor class had an unused sample.
    pub kept_clean_warnings: usize,
}

/// Sample an n-way k-shot episode: n classes uniformly without replacement,
/// then k+q samples per class uniformly without replacement, the first k as
/// support. Deterministic given the stream's (seed, label).
pub fn sample_episode(
    view: &BankView<'_>,
    table: &EmbeddingTable,
    ways: usize,
    shots: usize,
    queries_per_class: usize,
    rng: &mut RngStream,
) -> Result<Episode, EpisodeError> {
    if ways == 0 || shots == 0 {
        return Err(EpisodeError::Config(
            "ways and shots must be positive".into(),
        ));
    }
    if view.n_classes() < ways {
        return Err(EpisodeError::Insufficient {
            what: "classes in view".into(),
            required: ways,
            available: view.n_classes(),
        });
    }

    let chosen: Vec<usize> = sample(rng, view.n_classes(), ways).into_iter().collect();
    let per_class = shots + queries_per_class;

    let mut class_names = Vec::with_capacity(ways);
    let mut class_embeddings = Vec::with_capacity(ways);
    let mut support = Vec::with_capacity(ways);
    let mut query = Vec::new();
    let mut used_samples = Vec::with_capacity(ways);

    for (ci, &vi) in chosen.iter().enumerate() {
        let class = view.class(vi);
        if class.n_samples() < per_class {
            return Err(EpisodeError::Insufficient {
                what: format!("samples in class {:?}", class.name),
                required: per_class,
                available: class.n_samples(),
            });
        }
        let picks: Vec<usize> = sample(rng, class.n_samples(), per_class)
            .into_iter()
            .collect();
        let mut slots = Vec::with_capacity(shots);
        for &si in &picks[..shots] {
            slots.push(SupportRecord {
                feature: class.feature_row_f64(si),
                presented_class: ci,
                true_class: ci,
            });
        }
        support.push(slots);
        for &qi in &picks[shots..] {
            query.push(QueryRecord {
                feature: class.feature_row_f64(qi),
                true_class: ci,
            });
        }
        class_names.push(class.name.clone());
        class_embeddings.push(table.embedding_for_class(&class.name)?);
        used_samples.push(picks.into_iter().collect());
    }

    Ok(Episode {
        ways,
        shots,
        queries_per_class,
        class_names,
        class_embeddings,
        support,
        query,
        view_class_indices: chosen,
        used_samples,
    })
}

/// Apply the label-noise protocol to an episode's support set.
///
/// The first `min_clean` slots of every class are untouched. Each remaining
/// slot independently becomes noisy with probability `noise_prob`: its
/// feature is replaced by a fresh (unused in this episode) sample of a
/// uniformly chosen different episode class d, its true class becomes d and
/// its presented class stays put. Queries and embeddings are never altered.
pub fn inject_noise(
    view: &BankView<'_>,
    mut episode: Episode,
    cfg: &NoiseConfig,
    rng: &mut RngStream,
) -> Result<(Episode, NoiseReport), EpisodeError> {
    cfg.validate(episode.shots)?;
    let mut report = NoiseReport::default();
    if !cfg.enabled || cfg.noise_prob == 0.0 {
        return Ok((episode, report));
    }

    let n = episode.ways;
    for c in 0..n {
        for slot in cfg.min_clean..episode.shots {
            if rng.next_f64() >= cfg.noise_prob {
                continue;
            }
            // uniform donor among the other episode classes
            let mut donor = rng.gen_range(0..n - 1);
            if donor >= c {
                donor += 1;
            }
            let donor = if has_unused(&episode, view, donor) {
                Some(donor)
            } else {
                let fallback = (0..n).find(|&d| d != c && has_unused(&episode, view, d));
                if fallback.is_some() {
                    report.donor_fallbacks += 1;
                }
                fallback
            };
            let Some(d) = donor else {
                report.kept_clean_warnings += 1;
                continue;
            };
            let class = view.class(episode.view_class_indices[d]);
            let unused: Vec<usize> = (0..class.n_samples())
                .filter(|i| !episode.used_samples[d].contains(i))
                .collect();
            let pick = unused[rng.gen_range(0..unused.len())];
            episode.used_samples[d].insert(pick);
            let rec = &mut episode.support[c][slot];
            rec.feature = class.feature_row_f64(pick);
            rec.true_class = d;
            report.noisy_slots += 1;
        }
    }
    Ok((episode, report))
}

fn has_unused(episode: &Episode, view: &BankView<'_>, d: usize) -> bool {
    let class = view.class(episode.view_class_indices[d]);
    episode.used_samples[d].len() < class.n_samples()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::databank::{synth_generate, SynthSpec};

    fn fixture(n_classes: usize, samples: usize) -> (crate::databank::FeatureBank, EmbeddingTable) {
        let spec = SynthSpec {
            n_classes,
            samples_per_class: samples,
            d_v: 6,
            d_e: 4,
            seed: 17,
            split_fractions: (1.0, 0.0),
            ..SynthSpec::default()
        };
        synth_generate(&spec).unwrap()
    }

    #[test]
    fn five_way_one_shot_sizes() {
        let (bank, table) = fixture(8, 30);
        let view = bank.full_view();
        let mut rng = RngStream::new(1, "ep");
        let ep = sample_episode(&view, &table, 5, 1, 15, &mut rng).unwrap();
        assert_eq!(ep.support.iter().map(Vec::len).sum::<usize>(), 5);
        assert_eq!(ep.query.len(), 75);
        assert_eq!(ep.class_embeddings.len(), 5);
    }

    #[test]
    fn all_classes_requested_uses_whole_view() {
        let (bank, table) = fixture(6, 20);
        let view = bank.full_view();
        let mut rng = RngStream::new(2, "ep");
        let ep = sample_episode(&view, &table, 6, 2, 3, &mut rng).unwrap();
        let mut names = ep.class_names.clone();
        names.sort();
        let mut all: Vec<String> = bank.classes().iter().map(|c| c.name.clone()).collect();
        all.sort();
        assert_eq!(names, all);
    }

    #[test]
    fn replay_is_field_identical() {
        let (bank, table) = fixture(10, 25);
        let view = bank.full_view();
        let a = sample_episode(&view, &table, 5, 3, 4, &mut RngStream::new(9, "ep/7")).unwrap();
        let b = sample_episode(&view, &table, 5, 3, 4, &mut RngStream::new(9, "ep/7")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn support_and_query_indices_disjoint() {
        let (bank, table) = fixture(6, 12);
        let view = bank.full_view();
        for t in 0..50 {
            let mut rng = RngStream::new(3, &format!("ep/{t}"));
            let ep = sample_episode(&view, &table, 4, 2, 3, &mut rng).unwrap();
            for (c, used) in ep.used_samples.iter().enumerate() {
                assert_eq!(used.len(), 5, "class {c} reused a sample index");
            }
        }
    }

    #[test]
    fn insufficient_classes_states_required_vs_available() {
        let (bank, table) = fixture(3, 10);
        let view = bank.full_view();
        let mut rng = RngStream::new(0, "ep");
        match sample_episode(&view, &table, 5, 1, 1, &mut rng) {
            Err(EpisodeError::Insufficient {
                required,
                available,
                ..
            }) => {
                assert_eq!((required, available), (5, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn insufficient_samples_detected() {
        let (bank, table) = fixture(6, 4);
        let view = bank.full_view();
        let mut rng = RngStream::new(0, "ep");
        assert!(matches!(
            sample_episode(&view, &table, 5, 3, 5, &mut rng),
            Err(EpisodeError::Insufficient { .. })
        ));
    }

    #[test]
    fn noise_prob_zero_returns_episode_unchanged() {
        let (bank, table) = fixture(6, 20);
        let view = bank.full_view();
        let ep = sample_episode(&view, &table, 5, 5, 2, &mut RngStream::new(4, "ep")).unwrap();
        let cfg = NoiseConfig {
            enabled: true,
            noise_prob: 0.0,
            ..NoiseConfig::default()
        };
        let (noisy, report) =
            inject_noise(&view, ep.clone(), &cfg, &mut RngStream::new(4, "noise")).unwrap();
        assert_eq!(ep, noisy);
        assert_eq!(report, NoiseReport::default());
    }

    #[test]
    fn noisy_count_bounded_by_shots_minus_min_clean() {
        let (bank, table) = fixture(8, 30);
        let view = bank.full_view();
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 3,
            noise_prob: 0.5,
        };
        for t in 0..200 {
            let mut rng = RngStream::new(5, &format!("ep/{t}"));
            let ep = sample_episode(&view, &table, 5, 5, 2, &mut rng).unwrap();
            let mut nrng = RngStream::new(5, &format!("noise/{t}"));
            let (ep, _) = inject_noise(&view, ep, &cfg, &mut nrng).unwrap();
            for count in ep.noisy_counts() {
                assert!(count <= 2, "noisy count {count} out of range");
            }
        }
    }

    #[test]
    fn full_noise_prob_saturates_both_slots() {
        let (bank, table) = fixture(8, 40);
        let view = bank.full_view();
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 3,
            noise_prob: 1.0,
        };
        for t in 0..50 {
            let mut rng = RngStream::new(6, &format!("ep/{t}"));
            let ep = sample_episode(&view, &table, 5, 5, 2, &mut rng).unwrap();
            let mut nrng = RngStream::new(6, &format!("noise/{t}"));
            let (ep, report) = inject_noise(&view, ep, &cfg, &mut nrng).unwrap();
            assert_eq!(report.kept_clean_warnings, 0);
            for count in ep.noisy_counts() {
                assert_eq!(count, 2);
            }
        }
    }

    #[test]
    fn queries_embeddings_and_clean_slots_untouched() {
        let (bank, table) = fixture(8, 30);
        let view = bank.full_view();
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 3,
            noise_prob: 1.0,
        };
        let ep = sample_episode(&view, &table, 5, 5, 4, &mut RngStream::new(7, "ep")).unwrap();
        let before = ep.clone();
        let (after, _) = inject_noise(&view, ep, &cfg, &mut RngStream::new(7, "noise")).unwrap();
        assert_eq!(after.query, before.query);
        assert_eq!(after.class_embeddings, before.class_embeddings);
        for c in 0..5 {
            for slot in 0..3 {
                assert_eq!(after.support[c][slot], before.support[c][slot]);
            }
        }
    }

    #[test]
    fn noisy_slot_holds_a_real_donor_sample() {
        let (bank, table) = fixture(8, 30);
        let view = bank.full_view();
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 3,
            noise_prob: 1.0,
        };
        let ep = sample_episode(&view, &table, 5, 5, 2, &mut RngStream::new(8, "ep")).unwrap();
        let (ep, _) = inject_noise(&view, ep, &cfg, &mut RngStream::new(8, "noise")).unwrap();
        for (c, slots) in ep.support.iter().enumerate() {
            for s in slots {
                assert_eq!(s.presented_class, c);
                if s.true_class != c {
                    let donor = view.class(ep.view_class_indices[s.true_class]);
                    let found = (0..donor.n_samples())
                        .any(|i| donor.feature_row_f64(i) == s.feature);
                    assert!(found, "noisy feature does not exist in donor class");
                }
            }
        }
    }

    #[test]
    fn exhausted_donors_leave_slot_clean_with_warning() {
        // 2 classes × 6 samples each; 5-shot 1-query consumes all six
        // samples per class, so no donor has anything left
        let (bank, table) = fixture(2, 6);
        let view = bank.full_view();
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 3,
            noise_prob: 1.0,
        };
        let ep = sample_episode(&view, &table, 2, 5, 1, &mut RngStream::new(9, "ep")).unwrap();
        let (ep, report) = inject_noise(&view, ep, &cfg, &mut RngStream::new(9, "noise")).unwrap();
        assert_eq!(report.noisy_slots, 0);
        assert_eq!(report.kept_clean_warnings, 4);
        assert!(ep.noisy_counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn min_clean_larger_than_shots_is_config_error() {
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 6,
            noise_prob: 0.5,
        };
        assert!(cfg.validate(5).is_err());
    }

    #[test]
    fn bernoulli_expectation_small_sample() {
        let (bank, table) = fixture(8, 40);
        let view = bank.full_view();
        let cfg = NoiseConfig {
            enabled: true,
            min_clean: 3,
            noise_prob: 0.5,
        };
        let episodes = 2000;
        let mut total = 0usize;
        for t in 0..episodes {
            let mut rng = RngStream::new(10, &format!("ep/{t}"));
            let ep = sample_episode(&view, &table, 5, 5, 2, &mut rng).unwrap();
            let mut nrng = RngStream::new(10, &format!("noise/{t}"));
            let (ep, _) = inject_noise(&view, ep, &cfg, &mut nrng).unwrap();
            total += ep.noisy_counts().iter().sum::<usize>();
        }
        let mean_per_class = total as f64 / (episodes * 5) as f64;
        assert!(
            (mean_per_class - 1.0).abs() < 0.05,
            "mean noisy slots per class {mean_per_class}"
        );
    }
}
