//! Trainable parameters and SGD with momentum and weight decay.

use super::tensor::Tensor;

/// A named trainable tensor with its gradient and momentum buffers.
/// All three share one shape.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(shape.clone()),
            momentum: Tensor::zeros(shape),
        }
    }

    pub fn zero_grad(&mut self) {
        for v in self.grad.data_mut() {
            *v = 0.0;
        }
    }

    /// Add a gradient tensor (same shape) into the grad buffer.
    pub fn accumulate_grad(&mut self, g: &Tensor) {
        debug_assert_eq!(self.grad.shape(), g.shape());
        for (dst, src) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *dst += src;
        }
    }
}

/// v ← m·v + grad + wd·value; value ← value − lr·v, per parameter.
pub fn sgd_step(params: &mut [&mut Parameter], lr: f64, momentum: f64, weight_decay: f64) {
    for p in params {
        for i in 0..p.value.len() {
            let g = p.grad.data()[i] + weight_decay * p.value.data()[i];
            let v = momentum * p.momentum.data()[i] + g;
            p.momentum.data_mut()[i] = v;
            p.value.data_mut()[i] -= lr * v;
        }
    }
}
