//! Prototype construction and query scoring for the five model variants.
//!
//! All variants score a query against a class prototype by negative squared
//! Euclidean distance divided by the fixed scale. They differ in how the
//! prototype is built:
//!
//! - `pn`        — plain mean of support features; no semantic input
//! - `am3`       — alpha-mix of the mean with the transformed class embedding
//! - `sample_att`— alpha-mix with an attention-weighted support average
//! - `feat_att`  — per-dimension scale vector applied to prototype and query
//! - `combined`  — sample attention plus feature attention plus the prior
//!
//! In the feature-attention variants the query is scaled by the class's
//! attention vector while the semantic prior branch stays unscaled; the
//! `scale_prior_branch` switch applies the scale to the prior as well.

use crate::episodes::Episode;
use crate::gradcore::{GradError, Graph, Mode, NodeId, RngStream, Tensor};

use super::heads::{BoundHeads, HeadParams, SEM_DROPOUT, TAU_DROPOUT, VIS_DROPOUT};
use super::{ScoreMatrix, VariantId};

/// One episode's forward pass. The graph stays alive so a loss can be
/// appended and gradients pulled back through the bound heads.
pub struct EpisodeForward {
    pub graph: Graph,
    pub bound: BoundHeads,
    pub logits: NodeId,
    pub score: ScoreMatrix,
    /// Per episode class, the k sample-attention weights; present only for
    /// variants that compute sample attention.
    pub attention: Option<Vec<Vec<f64>>>,
}

/// Run a variant's forward pass over a whole episode: per class, build the
/// prototype from the support slots presented under that class, then score
/// every query against every class.
pub fn episode_forward(
    episode: &Episode,
    heads: &HeadParams,
    variant: VariantId,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<EpisodeForward, GradError> {
    heads.mix.validate()?;
    let g = Graph::new();
    let bound = heads.bind(&g);
    let alpha = heads.mix.alpha;
    let s = heads.mix.dist_scale;

    let query_rows: Vec<Vec<f64>> = episode.query.iter().map(|q| q.feature.clone()).collect();
    let queries = g.constant(Tensor::from_rows(&query_rows)?);

    let mut columns = Vec::with_capacity(episode.ways);
    let mut attention: Vec<Vec<f64>> = Vec::new();

    for c in 0..episode.ways {
        let support_rows: Vec<Vec<f64>> = episode.support[c]
            .iter()
            .map(|r| r.feature.clone())
            .collect();
        let k = support_rows.len();
        if k == 0 {
            return Err(GradError::InvalidConfig(format!(
                "class {c} has an empty support set"
            )));
        }
        let support = g.constant(Tensor::from_rows(&support_rows)?);
        let psi = g.constant(Tensor::row(episode.class_embeddings[c].clone()));

        // data-driven base prototype
        let base = if variant.uses_sample_attention() {
            let u1 = g.affine(support, bound.gamma_vis_1.weight, bound.gamma_vis_1.bias)?;
            let u1 = g.dropout(u1, VIS_DROPOUT, mode, rng)?;
            let u = g.affine(g.relu(u1), bound.gamma_vis_2.weight, bound.gamma_vis_2.bias)?;
            let v1 = g.affine(psi, bound.gamma_sem_1.weight, bound.gamma_sem_1.bias)?;
            let v1 = g.dropout(v1, SEM_DROPOUT, mode, rng)?;
            let v = g.affine(g.relu(v1), bound.gamma_sem_2.weight, bound.gamma_sem_2.bias)?;
            let scores = g.sum_rows(g.mul_row(u, v)?);
            let weights = g.softmax_rows(g.reshape(scores, vec![1, k])?);
            attention.push(g.value(weights).data().to_vec());
            g.matmul(weights, support)?
        } else {
            g.mean_rows(support)
        };

        // per-dimension feature attention vector
        let feat_scale = if variant.uses_feature_attention() {
            let h = g.softmax_rows(g.affine(psi, bound.eta_feat_1.weight, bound.eta_feat_1.bias)?);
            Some(g.affine(h, bound.eta_feat_2.weight, bound.eta_feat_2.bias)?)
        } else {
            None
        };

        let (prototype, class_queries) = match variant {
            VariantId::Pn => (base, queries),
            VariantId::Am3 | VariantId::SampleAtt => {
                let psi_d = g.dropout(psi, TAU_DROPOUT, mode, rng)?;
                let tau = g.affine(psi_d, bound.tau_prior.weight, bound.tau_prior.bias)?;
                let mixed = g.add(g.scale(base, alpha), g.scale(tau, 1.0 - alpha))?;
                (mixed, queries)
            }
            VariantId::FeatAtt | VariantId::Combined => {
                let a = feat_scale.expect("feature attention vector");
                let psi_d = g.dropout(psi, TAU_DROPOUT, mode, rng)?;
                let tau = g.affine(psi_d, bound.tau_prior.weight, bound.tau_prior.bias)?;
                let prior = if heads.mix.scale_prior_branch {
                    g.mul(a, tau)?
                } else {
                    tau
                };
                let scaled_base = g.mul(a, base)?;
                let mixed = g.add(g.scale(scaled_base, alpha), g.scale(prior, 1.0 - alpha))?;
                (mixed, g.mul_row(queries, a)?)
            }
        };

        let diff = g.sub_row(class_queries, prototype)?;
        let sq = g.mul(diff, diff)?;
        let col = g.scale(g.sum_rows(sq), -1.0 / s);
        columns.push(col);
    }

    let logits = g.concat_cols(&columns)?;
    let score = ScoreMatrix::from_logits(g.value(logits))?;
    Ok(EpisodeForward {
        graph: g,
        bound,
        logits,
        score,
        attention: if variant.uses_sample_attention() {
            Some(attention)
        } else {
            None
        },
    })
}

// ── Plain (graph-free) forms of the per-class operations ─────────────
//
// These are the reference surface for the individual operations; the
// episode forward above composes the same math on the tape.

/// Arithmetic mean over support rows.
pub fn pn_prototype(rows: &[Vec<f64>]) -> Result<Vec<f64>, GradError> {
    let k = rows.len();
    if k == 0 {
        return Err(GradError::InvalidConfig("empty support set".into()));
    }
    let d = rows[0].len();
    let mut out = vec![0.0; d];
    for row in rows {
        if row.len() != d {
            return Err(GradError::ShapeMismatch {
                op: "pn_prototype".into(),
                lhs: vec![d],
                rhs: vec![row.len()],
            });
        }
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= k as f64;
    }
    Ok(out)
}

/// −‖query − prototype‖² / s.
pub fn pn_score(query: &[f64], prototype: &[f64], s: f64) -> Result<f64, GradError> {
    if query.len() != prototype.len() {
        return Err(GradError::ShapeMismatch {
            op: "pn_score".into(),
            lhs: vec![query.len()],
            rhs: vec![prototype.len()],
        });
    }
    if !(s > 0.0) {
        return Err(GradError::InvalidConfig(format!(
            "dist_scale must be positive, got {s}"
        )));
    }
    let d2: f64 = query
        .iter()
        .zip(prototype)
        .map(|(q, p)| (q - p) * (q - p))
        .sum();
    Ok(-d2 / s)
}

/// α·theta_base + (1−α)·tau_psi.
pub fn prior_prototype(theta_base: &[f64], tau_psi: &[f64], alpha: f64) -> Vec<f64> {
    theta_base
        .iter()
        .zip(tau_psi)
        .map(|(t, p)| alpha * t + (1.0 - alpha) * p)
        .collect()
}

/// Test hook: attention weights from pre-embedded visual rows `u` and a
/// semantic vector `v` — softmax over the inner products uᵢ·v.
pub fn sample_attention_from_embeddings(u: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = u
        .iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Σ_i weights_i · feature_i.
pub fn sampleatt_prototype(rows: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>, GradError> {
    if rows.len() != weights.len() {
        return Err(GradError::ShapeMismatch {
            op: "sampleatt_prototype".into(),
            lhs: vec![rows.len()],
            rhs: vec![weights.len()],
        });
    }
    if rows.is_empty() {
        return Err(GradError::InvalidConfig("empty support set".into()));
    }
    let d = rows[0].len();
    let mut out = vec![0.0; d];
    for (row, &w) in rows.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// −‖a ⊙ query − a ⊙ prototype‖² / s.
pub fn featatt_score(
    query: &[f64],
    prototype: &[f64],
    a: &[f64],
    s: f64,
) -> Result<f64, GradError> {
    if query.len() != prototype.len() || query.len() != a.len() {
        return Err(GradError::ShapeMismatch {
            op: "featatt_score".into(),
            lhs: vec![query.len()],
            rhs: vec![prototype.len(), a.len()],
        });
    }
    let sq: Vec<f64> = query.iter().zip(a).map(|(q, s)| q * s).collect();
    let sp: Vec<f64> = prototype.iter().zip(a).map(|(p, s)| p * s).collect();
    pn_score(&sq, &sp, s)
}
