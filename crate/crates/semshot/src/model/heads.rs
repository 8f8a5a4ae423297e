//! Trainable meta-learner heads.
//!
//! - `tau_prior`: semantic prior transform, dropout 0.4 then affine d_e→d_v
//! - `gamma_vis`: visual attention embedding, affine d_v→w, dropout 0.2,
//!   relu, affine w→w
//! - `gamma_sem`: semantic attention embedding, affine d_e→w, dropout 0.6,
//!   relu, affine w→w
//! - `eta_feat`: feature attention, affine d_e→w, softmax over the w units,
//!   affine w→d_v (no output nonlinearity, so negative scales are
//!   representable)
//!
//! plus the fixed mixing weight `alpha` and distance divisor `dist_scale`.

use crate::gradcore::{GradError, Graph, NodeId, Parameter, RngStream, Tensor};

pub const DEFAULT_ATTN_WIDTH: usize = 32;
pub const TAU_DROPOUT: f64 = 0.4;
pub const VIS_DROPOUT: f64 = 0.2;
pub const SEM_DROPOUT: f64 = 0.6;

/// One FC layer's weights and bias.
#[derive(Clone, Debug)]
pub struct AffineHead {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl AffineHead {
    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
    pub fn init(name: &str, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| (rng.next_f64() * 2.0 - 1.0) * bound)
            .collect();
        AffineHead {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::new(vec![fan_in, fan_out], data).expect("init shape"),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(vec![1, fan_out])),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.shape()[1]
    }
}

/// Fixed (non-trained) model hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixConfig {
    /// Weight of the data-driven prototype; 1−alpha goes to the semantic
    /// prior. Must lie in [0, 1].
    pub alpha: f64,
    /// Positive divisor applied to squared distances.
    pub dist_scale: f64,
    /// When set, the semantic prior branch is also scaled by the feature
    /// attention vector in the feat-att/combined variants (ablation switch;
    /// default off).
    pub scale_prior_branch: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            alpha: 0.5,
            dist_scale: 32.0,
            scale_prior_branch: false,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), GradError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GradError::InvalidConfig(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if !(self.dist_scale > 0.0) {
            return Err(GradError::InvalidConfig(format!(
                "dist_scale must be positive, got {}",
                self.dist_scale
            )));
        }
        Ok(())
    }
}

/// Graph-side handles for one head's weight and bias leaves.
#[derive(Clone, Copy, Debug)]
pub struct BoundAffine {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// Graph-side handles for every head, in the same order as `HeadParams`.
#[derive(Clone, Copy, Debug)]
pub struct BoundHeads {
    pub tau_prior: BoundAffine,
    pub gamma_vis_1: BoundAffine,
    pub gamma_vis_2: BoundAffine,
    pub gamma_sem_1: BoundAffine,
    pub gamma_sem_2: BoundAffine,
    pub eta_feat_1: BoundAffine,
    pub eta_feat_2: BoundAffine,
}

impl BoundHeads {
    fn nodes(&self) -> [(NodeId, NodeId); 7] {
        [
            (self.tau_prior.weight, self.tau_prior.bias),
            (self.gamma_vis_1.weight, self.gamma_vis_1.bias),
            (self.gamma_vis_2.weight, self.gamma_vis_2.bias),
            (self.gamma_sem_1.weight, self.gamma_sem_1.bias),
            (self.gamma_sem_2.weight, self.gamma_sem_2.bias),
            (self.eta_feat_1.weight, self.eta_feat_1.bias),
            (self.eta_feat_2.weight, self.eta_feat_2.bias),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct HeadParams {
    pub d_v: usize,
    pub d_e: usize,
    pub attn_width: usize,
    pub mix: MixConfig,
    pub tau_prior: AffineHead,
    pub gamma_vis_1: AffineHead,
    pub gamma_vis_2: AffineHead,
    pub gamma_sem_1: AffineHead,
    pub gamma_sem_2: AffineHead,
    pub eta_feat_1: AffineHead,
    pub eta_feat_2: AffineHead,
}

impl HeadParams {
    pub fn init(
        d_v: usize,
        d_e: usize,
        attn_width: usize,
        mix: MixConfig,
        rng: &mut RngStream,
    ) -> Result<Self, GradError> {
        mix.validate()?;
        if d_v == 0 || d_e == 0 || attn_width == 0 {
            return Err(GradError::InvalidConfig(
                "d_v, d_e and attn_width must be positive".into(),
            ));
        }
        let w = attn_width;
        Ok(HeadParams {
            d_v,
            d_e,
            attn_width: w,
            mix,
            tau_prior: AffineHead::init("tau_prior", d_e, d_v, &mut rng.substream("tau_prior")),
            gamma_vis_1: AffineHead::init("gamma_vis.1", d_v, w, &mut rng.substream("gamma_vis.1")),
            gamma_vis_2: AffineHead::init("gamma_vis.2", w, w, &mut rng.substream("gamma_vis.2")),
            gamma_sem_1: AffineHead::init("gamma_sem.1", d_e, w, &mut rng.substream("gamma_sem.1")),
            gamma_sem_2: AffineHead::init("gamma_sem.2", w, w, &mut rng.substream("gamma_sem.2")),
            eta_feat_1: AffineHead::init("eta_feat.1", d_e, w, &mut rng.substream("eta_feat.1")),
            eta_feat_2: AffineHead::init("eta_feat.2", w, d_v, &mut rng.substream("eta_feat.2")),
        })
    }

    fn heads(&self) -> [&AffineHead; 7] {
        [
            &self.tau_prior,
            &self.gamma_vis_1,
            &self.gamma_vis_2,
            &self.gamma_sem_1,
            &self.gamma_sem_2,
            &self.eta_feat_1,
            &self.eta_feat_2,
        ]
    }

    fn heads_mut(&mut self) -> [&mut AffineHead; 7] {
        [
            &mut self.tau_prior,
            &mut self.gamma_vis_1,
            &mut self.gamma_vis_2,
            &mut self.gamma_sem_1,
            &mut self.gamma_sem_2,
            &mut self.eta_feat_1,
            &mut self.eta_feat_2,
        ]
    }

    /// All trainable parameters, in a stable order.
    pub fn parameters(&self) -> Vec<&Parameter> {
        self.heads()
            .into_iter()
            .flat_map(|h| [&h.weight, &h.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.heads_mut()
            .into_iter()
            .flat_map(|h| [&mut h.weight, &mut h.bias])
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Register every head as a leaf on a fresh graph.
    pub fn bind(&self, g: &Graph) -> BoundHeads {
        let bind_one = |h: &AffineHead| BoundAffine {
            weight: g.leaf(h.weight.value.clone()),
            bias: g.leaf(h.bias.value.clone()),
        };
        BoundHeads {
            tau_prior: bind_one(&self.tau_prior),
            gamma_vis_1: bind_one(&self.gamma_vis_1),
            gamma_vis_2: bind_one(&self.gamma_vis_2),
            gamma_sem_1: bind_one(&self.gamma_sem_1),
            gamma_sem_2: bind_one(&self.gamma_sem_2),
            eta_feat_1: bind_one(&self.eta_feat_1),
            eta_feat_2: bind_one(&self.eta_feat_2),
        }
    }

    /// Pull the leaves' accumulated gradients back into the parameters
    /// after a backward pass.
    pub fn absorb_grads(&mut self, g: &Graph, bound: &BoundHeads) {
        let nodes = bound.nodes();
        for (head, (w, b)) in self.heads_mut().into_iter().zip(nodes) {
            head.weight.accumulate_grad(&g.grad(w));
            head.bias.accumulate_grad(&g.grad(b));
        }
    }

    /// Flat copies of parameter values, paired with names; used by the
    /// checkpoint writer and determinism tests.
    pub fn named_values(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.parameters()
            .into_iter()
            .map(|p| {
                (
                    p.name.clone(),
                    p.value.shape().to_vec(),
                    p.value.data().to_vec(),
                )
            })
            .collect()
    }
}
