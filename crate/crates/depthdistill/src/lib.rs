//! Cross-architecture knowledge distillation for efficient monocular
//! depth estimation, built from first principles: a tensor engine with
//! reverse-mode autodiff, CNN and transformer blocks, a local-global
//! convolution wrapper, ghost-decoder feature acclimation with an
//! attentive distillation loss, and a deterministic training harness
//! that runs on procedurally generated RGB-D scenes.
//!
//! See the crate `examples/` for runnable entry points per capability
//! and the `depthdistill` binary for the command-line surface.

pub mod cli;
pub mod error;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
