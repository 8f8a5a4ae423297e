//! Precomputed visual feature vectors, standing in for backbone outputs.
//!
//! A [`FeatureBank`] holds per-class feature matrices tagged with a
//! train/val/test split. Banks are immutable after load or generation and
//! safe to share read-only. Features are stored as `f32`, matching the
//! on-disk format, and widened to `f64` when they enter the numeric core.

mod format;
mod synth;

pub use format::{decode_bank, encode_bank, load_bank, save_bank, HEADER_LEN};
pub use synth::{synth_generate, SynthSpec};

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::semstore::normalize_name;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank format error: {0}")]
    Format(String),
    #[error("corrupt bank at byte offset {offset}: {detail}")]
    Corrupt { offset: usize, detail: String },
    #[error("bank validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (want train|val|test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub name: String,
    pub split: Split,
    /// n_samples × d_v, row-major.
    features: Vec<f32>,
    n_samples: usize,
}

impl ClassRecord {
    pub fn new(
        name: String,
        split: Split,
        features: Vec<f32>,
        d_v: usize,
    ) -> Result<Self, BankError> {
        if d_v == 0 || features.len() % d_v != 0 {
            return Err(BankError::Validation(format!(
                "class {name:?}: {} feature values do not tile d_v={d_v}",
                features.len()
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(BankError::Validation(format!(
                "class {name:?}: non-finite feature value {bad}"
            )));
        }
        let n_samples = features.len() / d_v;
        Ok(ClassRecord {
            name,
            split,
            features,
            n_samples,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        let d = self.features.len() / self.n_samples;
        &self.features[i * d..(i + 1) * d]
    }

    pub fn feature_row_f64(&self, i: usize) -> Vec<f64> {
        self.feature_row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn raw_features(&self) -> &[f32] {
        &self.features
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    d_v: usize,
    classes: Vec<ClassRecord>,
}

impl FeatureBank {
    pub fn new(d_v: usize, classes: Vec<ClassRecord>) -> Result<Self, BankError> {
        if d_v == 0 {
            return Err(BankError::Validation("d_v must be positive".into()));
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if c.features.len() != c.n_samples * d_v {
                return Err(BankError::Validation(format!(
                    "class {:?}: feature rows are not d_v={d_v} wide",
                    c.name
                )));
            }
            if !seen.insert(normalize_name(&c.name)) {
                return Err(BankError::Validation(format!(
                    "duplicate class name after normalization: {:?}",
                    c.name
                )));
            }
        }
        Ok(FeatureBank { d_v, classes })
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn classes(&self) -> &[ClassRecord] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), BankError> {
        format::save_bank(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, BankError> {
        format::load_bank(path.as_ref())
    }

    /// Borrowed view of the classes carrying one split tag. An empty view is
    /// legal; callers decide whether that is worth a warning.
    pub fn split_view(&self, split: Split) -> BankView<'_> {
        BankView {
            d_v: self.d_v,
            classes: self
                .classes
                .iter()
                .filter(|c| c.split == split)
                .collect(),
        }
    }

    /// View over every class regardless of split.
    pub fn full_view(&self) -> BankView<'_> {
        BankView {
            d_v: self.d_v,
            classes: self.classes.iter().collect(),
        }
    }
}

/// Read-only selection of bank classes; what episode sampling consumes.
#[derive(Debug, Clone)]
pub struct BankView<'a> {
    d_v: usize,
    classes: Vec<&'a ClassRecord>,
}

impl<'a> BankView<'a> {
    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, i: usize) -> &'a ClassRecord {
        self.classes[i]
    }

    pub fn classes(&self) -> &[&'a ClassRecord] {
        &self.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_bank() -> FeatureBank {
        let a = ClassRecord::new("a".into(), Split::Train, vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let b = ClassRecord::new("b".into(), Split::Val, vec![5.0, 6.0], 2).unwrap();
        FeatureBank::new(2, vec![a, b]).unwrap()
    }

    #[test]
    fn duplicate_names_rejected_after_normalization() {
        let a = ClassRecord::new("King Crab".into(), Split::Train, vec![1.0], 1).unwrap();
        let b = ClassRecord::new("king_crab".into(), Split::Test, vec![2.0], 1).unwrap();
        assert!(matches!(
            FeatureBank::new(1, vec![a, b]),
            Err(BankError::Validation(_))
        ));
    }

    #[test]
    fn non_finite_features_rejected() {
        assert!(ClassRecord::new("x".into(), Split::Train, vec![f32::NAN], 1).is_err());
    }

    #[test]
    fn split_views_partition_classes() {
        let bank = small_bank();
        let train = bank.split_view(Split::Train);
        let val = bank.split_view(Split::Val);
        let test = bank.split_view(Split::Test);
        assert_eq!(train.n_classes(), 1);
        assert_eq!(train.class(0).name, "a");
        assert_eq!(val.n_classes(), 1);
        assert!(test.is_empty());
        assert_eq!(
            train.n_classes() + val.n_classes() + test.n_classes(),
            bank.n_classes()
        );
    }

    #[test]
    fn feature_rows_are_d_v_wide() {
        let bank = small_bank();
        assert_eq!(bank.classes()[0].feature_row(1), &[3.0, 4.0]);
        assert_eq!(bank.classes()[0].feature_row_f64(0), vec![1.0, 2.0]);
    }
}
