//! Semantics-conditioned few-shot classification over precomputed feature
//! vectors: prototypical scoring, semantic prior mixing, sample and feature
//! attention, episodic training, and a noisy-support evaluation protocol.
//!
//! The crate is organized bottom-up:
//!
//! - [`gradcore`] — tensors, reverse-mode autodiff, SGD, seeded RNG streams,
//!   finite-difference gradient checking
//! - [`databank`] — feature banks (load/save/synthesize) standing in for
//!   backbone outputs
//! - [`semstore`] — semantic class embeddings parsed from word-vector text
//! - [`episodes`] — n-way k-shot task sampling and the label-noise protocol
//! - [`model`] — the meta-learner heads and the five scoring variants
//! - [`trainer`] — the episodic training loop and model selection
//! - [`eval`] — accuracy ± 95% CI evaluation, attention reporting, report files
//! - [`cli`] — the command-line surface used by the `semshot` binary
//!
//! See the crate `examples/` directory for one runnable example per
//! capability.

pub mod cli;
pub mod databank;
pub mod episodes;
pub mod eval;
pub mod gradcore;
pub mod model;
pub mod semstore;
pub mod trainer;
