//! Deterministic dense numerical primitives: tensors, a reverse-mode
//! autodiff tape, SGD, seeded random streams, and a finite-difference
//! gradient checker.

pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use gradcheck::{finite_diff_check, FiniteDiffReport, DEFAULT_EPS, DEFAULT_TOL};
pub use graph::{Graph, Mode, NodeId};
pub use optim::{sgd_step, Parameter};
pub use rng::RngStream;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),
    #[error("{op}: incompatible shapes {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "gradient check failed for parameter {param}, coordinate {coord}: \
         analytic {analytic:e} vs central-difference {numeric:e} \
         (relative error {rel_err:e} > tolerance {tol:e})"
    )]
    GradCheckFailed {
        param: String,
        coord: usize,
        analytic: f64,
        numeric: f64,
        rel_err: f64,
        tol: f64,
    },
}
