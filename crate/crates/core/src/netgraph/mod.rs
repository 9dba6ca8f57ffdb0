//! Network construction and analysis.
//!
//! Every variant of the ablation matrix (plain / residual / dense
//! connectivity, input-aware encoding, single or dual decoders, single or
//! multi resolution with three fusion alternatives) is built from one
//! [`ModelConfig`]. The module also provides parameter counting, wiring
//! inspection, and the receptive-field analyzer.

mod config;
pub mod layers;
mod model;
mod receptive;

pub use config::{parse_bool, parse_f64, parse_kv, parse_usize};
pub use config::{Connectivity, FusionKind, ModelConfig, Preset};
pub use model::{InstanceNet, SegmentationModel, WiringRecord};
pub use receptive::{receptive_field, FusionSpec, LayerGeom};
