//! MobileNetV3-Small and ResNet34 with an appended `1000 -> 2` head.

mod arch;
mod graph;
mod macs;
pub mod synthetic;

pub use arch::Architecture;
pub use graph::{
    required_tensors, ModelGraph, FEATURE_DIM, HEAD_BIAS, HEAD_WEIGHT, INPUT_SHAPE, NUM_CLASSES,
};
pub use macs::{LayerKind, MacReport, MacRow};
pub use synthetic::synthetic_weights;

use crate::error::Result;
use crate::weights::WeightStore;

/// Builds `arch` from `weights`, head included.
pub fn build_model(arch: Architecture, weights: &WeightStore) -> Result<ModelGraph> {
    ModelGraph::build(arch, weights)
}

/// Static cost report; see [`MacReport`] for the counting convention.
pub fn count_macs(model: &ModelGraph, input_shape: [usize; 3]) -> Result<MacReport> {
    model.count_macs(input_shape)
}
