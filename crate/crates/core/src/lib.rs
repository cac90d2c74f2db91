//! View-gated mixture-of-experts for multi-label attribute inference.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense `f64` tensors and a reverse-mode
//!   differentiation graph.
//! - [`model`]: shared trunk, view branch, per-view expert heads, the
//!   confidence-weighted aggregation and both losses.
//! - [`train`]: Adam with per-group learning rates, the epoch loop,
//!   transfer training with a frozen view branch, checkpoints.
//! - [`eval`]: mA, example-based metrics, mAP, view accuracy and the
//!   per-view specialization grid.
//! - [`synth`]: deterministic view-conditional datasets with a known
//!   generative model, file I/O and stratified splits.
//! - [`gradcheck`]: central finite-difference verification of the model.
//! - [`experiment`]: the key-value experiment config shared with the CLI.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod fingerprint;
pub mod gradcheck;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{Gate, Model, ModelConfig, Prediction};
pub use tensor::Tensor;
