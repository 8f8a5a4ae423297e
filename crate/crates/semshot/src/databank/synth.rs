//! Synthetic feature banks with paired semantic embeddings.
//!
//! Per class, a mean is drawn in feature space and samples scatter around it
//! with Gaussian noise (optionally a fraction of wider outliers). The class
//! embedding is a noisy fixed linear image of the class mean, so semantic
//! attention has signal to exploit exactly to the extent the noise
//! parameters allow.

use crate::gradcore::RngStream;
use crate::semstore::EmbeddingTable;

use super::{BankError, ClassRecord, FeatureBank, Split};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub d_v: usize,
    pub d_e: usize,
    pub class_mean_scale: f64,
    pub within_class_std: f64,
    pub semantic_noise_std: f64,
    pub outlier_fraction: f64,
    pub outlier_std: f64,
    /// Fraction of classes assigned to train and val; the rest is test.
    pub split_fractions: (f64, f64),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 10,
            samples_per_class: 50,
            d_v: 640,
            d_e: 300,
            class_mean_scale: 1.0,
            within_class_std: 0.3,
            semantic_noise_std: 0.05,
            outlier_fraction: 0.0,
            outlier_std: 3.0,
            split_fractions: (0.6, 0.2),
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), BankError> {
        if self.n_classes == 0 || self.samples_per_class == 0 || self.d_v == 0 || self.d_e == 0 {
            return Err(BankError::Validation(
                "n_classes, samples_per_class, d_v and d_e must be positive".into(),
            ));
        }
        if self.within_class_std < 0.0
            || self.semantic_noise_std < 0.0
            || self.outlier_std < 0.0
            || self.class_mean_scale < 0.0
        {
            return Err(BankError::Validation("std scales must be ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(BankError::Validation(
                "outlier_fraction must be in [0, 1)".into(),
            ));
        }
        let (ft, fv) = self.split_fractions;
        if ft < 0.0 || fv < 0.0 || ft + fv > 1.0 {
            return Err(BankError::Validation(
                "split fractions must be nonnegative and sum to ≤ 1".into(),
            ));
        }
        Ok(())
    }

    /// The fixed linear map d_v → d_e, a pure function of the seed.
    /// Entries are standard normals scaled by 1/√d_v; returned row-major
    /// as d_e rows of d_v values.
    pub fn semantic_map(&self) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(self.seed, "synth/map");
        let scale = 1.0 / (self.d_v as f64).sqrt();
        (0..self.d_e)
            .map(|_| (0..self.d_v).map(|_| rng.next_normal() * scale).collect())
            .collect()
    }

    /// Class counts per split: (train, val, test).
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let n = self.n_classes;
        let (ft, fv) = self.split_fractions;
        let n_train = ((ft * n as f64).round() as usize).min(n);
        let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
        (n_train, n_val, n - n_train - n_val)
    }
}

pub fn apply_semantic_map(map: &[Vec<f64>], mean: &[f64]) -> Vec<f64> {
    map.iter()
        .map(|row| row.iter().zip(mean).map(|(m, x)| m * x).sum())
        .collect()
}

/// Generate a bank and its embedding table, deterministically from the spec.
pub fn synth_generate(spec: &SynthSpec) -> Result<(FeatureBank, EmbeddingTable), BankError> {
    spec.validate()?;
    let map = spec.semantic_map();
    let (n_train, n_val, _) = spec.split_sizes();

    let mut table = EmbeddingTable::new(spec.d_e)
        .map_err(|e| BankError::Validation(format!("embedding table: {e}")))?;
    let mut classes = Vec::with_capacity(spec.n_classes);

    for c in 0..spec.n_classes {
        let name = format!("class{c:03}");
        let split = if c < n_train {
            Split::Train
        } else if c < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };

        let mut mean_rng = RngStream::new(spec.seed, &format!("synth/class{c}/mean"));
        let mean: Vec<f64> = (0..spec.d_v)
            .map(|_| mean_rng.next_normal() * spec.class_mean_scale)
            .collect();

        let mut sample_rng = RngStream::new(spec.seed, &format!("synth/class{c}/samples"));
        let mut features = Vec::with_capacity(spec.samples_per_class * spec.d_v);
        for _ in 0..spec.samples_per_class {
            let std = if sample_rng.next_f64() < spec.outlier_fraction {
                spec.outlier_std
            } else {
                spec.within_class_std
            };
            for &m in &mean {
                features.push((m + sample_rng.next_normal() * std) as f32);
            }
        }
        classes.push(ClassRecord::new(name.clone(), split, features, spec.d_v)?);

        let mut sem_rng = RngStream::new(spec.seed, &format!("synth/class{c}/sem"));
        let psi: Vec<f64> = apply_semantic_map(&map, &mean)
            .into_iter()
            .map(|v| v + sem_rng.next_normal() * spec.semantic_noise_std)
            .collect();
        table
            .insert(&name, psi)
            .map_err(|e| BankError::Validation(format!("embedding for {name}: {e}")))?;
    }

    Ok((FeatureBank::new(spec.d_v, classes)?, table))
}
