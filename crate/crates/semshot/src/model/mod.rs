//! The few-shot classifier: trainable heads, the per-episode forward pass
//! for each scoring variant, and checkpoint I/O.

mod checkpoint;
mod forward;
mod heads;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointError,
};
pub use forward::{
    episode_forward, featatt_score, pn_prototype, pn_score, prior_prototype,
    sample_attention_from_embeddings, sampleatt_prototype, EpisodeForward,
};
pub use heads::{
    AffineHead, BoundAffine, BoundHeads, HeadParams, MixConfig, DEFAULT_ATTN_WIDTH, SEM_DROPOUT,
    TAU_DROPOUT, VIS_DROPOUT,
};

use crate::gradcore::{GradError, Tensor};

/// Which prototype/scoring rule to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariantId {
    /// Prototypical network: mean prototype, no semantic input.
    Pn,
    /// Mean prototype mixed with the transformed class embedding.
    Am3,
    /// Attention-weighted prototype mixed with the semantic prior.
    SampleAtt,
    /// Mean prototype with per-dimension feature attention and the prior.
    FeatAtt,
    /// Sample attention, feature attention and the prior together.
    Combined,
}

impl VariantId {
    pub const ALL: [VariantId; 5] = [
        VariantId::Pn,
        VariantId::Am3,
        VariantId::SampleAtt,
        VariantId::FeatAtt,
        VariantId::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantId::Pn => "pn",
            VariantId::Am3 => "am3",
            VariantId::SampleAtt => "sample_att",
            VariantId::FeatAtt => "feat_att",
            VariantId::Combined => "combined",
        }
    }

    /// Whether the variant reads the class embeddings at all.
    pub fn uses_semantics(self) -> bool {
        self != VariantId::Pn
    }

    pub fn uses_sample_attention(self) -> bool {
        matches!(self, VariantId::SampleAtt | VariantId::Combined)
    }

    pub fn uses_feature_attention(self) -> bool {
        matches!(self, VariantId::FeatAtt | VariantId::Combined)
    }
}

impl std::fmt::Display for VariantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VariantId {
    type Err = GradError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantId::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                GradError::InvalidConfig(format!(
                    "unknown variant '{s}' (expected pn, am3, sample_att, feat_att or combined)"
                ))
            })
    }
}

/// Per-episode query-by-class score table with hard predictions.
#[derive(Clone, Debug)]
pub struct ScoreMatrix {
    pub logits: Tensor,
    /// Argmax per query row; ties break to the lowest class index.
    pub predicted: Vec<usize>,
}

impl ScoreMatrix {
    pub fn from_logits(logits: Tensor) -> Result<Self, GradError> {
        if logits.shape().len() != 2 || logits.shape()[1] == 0 {
            return Err(GradError::InvalidShape(format!(
                "score matrix must be 2-D with at least one class, got {:?}",
                logits.shape()
            )));
        }
        if !logits.all_finite() {
            return Err(GradError::InvalidConfig(
                "non-finite value in episode logits".into(),
            ));
        }
        let predicted = (0..logits.rows())
            .map(|i| {
                let row = logits.row_slice(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        Ok(ScoreMatrix { logits, predicted })
    }

    pub fn n_queries(&self) -> usize {
        self.logits.rows()
    }

    pub fn accuracy(&self, labels: &[usize]) -> Result<f64, GradError> {
        if labels.len() != self.predicted.len() {
            return Err(GradError::ShapeMismatch {
                op: "accuracy".into(),
                lhs: vec![self.predicted.len()],
                rhs: vec![labels.len()],
            });
        }
        if self.predicted.is_empty() {
            return Err(GradError::InvalidConfig("no queries to score".into()));
        }
        let hits = self
            .predicted
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in VariantId::ALL {
            assert_eq!(v.name().parse::<VariantId>().unwrap(), v);
        }
        assert!("protonet".parse::<VariantId>().is_err());
    }

    #[test]
    fn score_matrix_argmax_ties_break_low() {
        let t = Tensor::new(vec![2, 3], vec![-1.0, -1.0, -5.0, -3.0, -0.5, -0.5]).unwrap();
        let m = ScoreMatrix::from_logits(t).unwrap();
        assert_eq!(m.predicted, vec![0, 1]);
    }

    #[test]
    fn score_matrix_rejects_nan() {
        let t = Tensor::new(vec![1, 2], vec![0.0, f64::NAN]).unwrap();
        assert!(ScoreMatrix::from_logits(t).is_err());
    }

    #[test]
    fn accuracy_counts_matches() {
        let t = Tensor::new(vec![4, 2], vec![0.0, -1.0, -1.0, 0.0, 0.0, -1.0, -1.0, 0.0]).unwrap();
        let m = ScoreMatrix::from_logits(t).unwrap();
        assert_eq!(m.accuracy(&[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(m.accuracy(&[0]).is_err());
    }
}
