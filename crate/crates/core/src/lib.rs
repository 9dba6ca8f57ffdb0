//! Segmentation engine for large histology rasters.
//!
//! The crate is organized around eight subsystems:
//!
//! - [`tensor`]: a small reverse-mode autodiff core (NCHW tensors, conv /
//!   deconv / pooling / batch norm / weighted cross-entropy) with a
//!   finite-difference gradient checker and a binary weight archive.
//! - [`netgraph`]: builds every encoder-decoder variant (plain, residual,
//!   dense connectivity, input-aware encoding, dual decoders, multi-resolution
//!   fusion) from a declarative [`netgraph::ModelConfig`], and analyzes
//!   parameter counts and receptive fields.
//! - [`tiling`]: overlapping patch grids over arbitrarily large rasters,
//!   context-bordered patch pairs, and score stitching back to full size.
//! - [`trainer`]: SGD with momentum and weight decay, inverse-class-frequency
//!   loss weighting, augmentation, a synthetic dataset generator, and
//!   checkpointing.
//! - [`metrics`]: confusion-matrix scoring (pixel accuracy, mean IoU, F1).
//! - [`classicseg`]: the classical baseline — SLIC superpixels, stain
//!   separation by color deconvolution, Lab/LBP histogram features, and a
//!   linear one-vs-rest SVM.
//! - [`diagnose`]: case-level diagnostic features over superpixel label maps
//!   and repeated stratified cross-validation with SVM and MLP classifiers.
//! - [`mask`]: the shared label-mask type and the fixed 8-label palette.

pub mod classicseg;
pub mod diagnose;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod netgraph;
pub mod tensor;
pub mod tiling;
pub mod trainer;

pub use error::{Error, Result};
pub use mask::LabelMask;
pub use tensor::{Shape4, Tensor};
