//! Offline pipeline for classifying dental calculus in RGB intraoral images.
//!
//! The crate covers the whole path from a photograph to a diagnosis and the
//! numbers used to judge it:
//!
//! - [`nn`]: tensor kernels (convolution, batch-norm folding, activations,
//!   pooling, fully connected) with multiply-accumulate accounting.
//! - [`weights`]: the `.tkws` / `.tkrt` binary tensor containers.
//! - [`zoo`]: MobileNetV3-Small and ResNet34 backbones with a 2-way head,
//!   forward inference and static MAC reports.
//! - [`preprocess`]: bounding-box crop, 640x640 letterbox, model-input
//!   normalization and the stratified 70/20/10 split.
//! - [`train`]: frozen-backbone feature extraction and head training with
//!   Adam and base-2 cross-entropy.
//! - [`metrics`]: confusion matrices and accuracy/recall/precision/F1.
//! - [`spectral`]: hyperspectral reflectance cubes to CIE XYZ to sRGB.
//! - [`bench`]: load-time, latency and peak-memory measurement.

pub mod bench;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod spectral;
pub mod tensor;
pub mod train;
pub mod weights;
pub mod zoo;

/// Library version, reported in CLI reproducibility headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use nn::{Activation, ConvSpec, MacCount};
pub use tensor::Tensor;
pub use weights::WeightStore;
pub use zoo::{Architecture, MacReport, ModelGraph};
