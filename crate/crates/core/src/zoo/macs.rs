//! Operation accounting for whole models.
//!
//! Each row splits its cost in two:
//!
//! - `macs`: multiply-accumulates of convolutions and fully connected layers,
//!   exactly as returned by the [`nn`](crate::nn) kernels.
//! - `aux_ops`: per-element work of the layers around them, counted the way
//!   the common PyTorch profilers of 2023 (ptflops 0.6/0.7) count it: one op
//!   per bias addition of layers that carry a bias, two per batch-norm
//!   element, one per ReLU element and one per pooled input element.
//!   Hard-swish, hard-sigmoid, residual additions and squeeze-excite channel
//!   scaling count zero.
//!
//! The row total is `macs + aux_ops`. Batch norm is folded away at build
//! time but still accounted for, so the report describes the unfolded
//! network the weights came from.

use std::fmt;

use crate::nn::{Activation, MacCount};
use crate::zoo::arch::ConvDesc;
use crate::zoo::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Spatial convolution over the feature map (includes 1x1 and depthwise).
    Conv,
    /// Squeeze-excite gating: pooling plus two 1x1 convolutions on `C x 1 x 1`.
    SqueezeExcite,
    Pool,
    Linear,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::SqueezeExcite => "squeeze_excite",
            LayerKind::Pool => "pool",
            LayerKind::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacRow {
    pub name: String,
    pub kind: LayerKind,
    pub macs: MacCount,
    pub aux_ops: u64,
}

impl MacRow {
    pub fn total(&self) -> u64 {
        self.macs.get() + self.aux_ops
    }
}

/// Per-layer operation counts for one architecture at one input shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacReport {
    pub arch: Architecture,
    pub input_shape: [usize; 3],
    pub rows: Vec<MacRow>,
}

impl MacReport {
    /// Sum of every row's total.
    pub fn total(&self) -> MacCount {
        MacCount(self.rows.iter().map(MacRow::total).sum())
    }

    /// Multiply-accumulates only (convolutions and fully connected layers).
    pub fn multiply_accumulates(&self) -> MacCount {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn total_of(&self, kind: LayerKind) -> u64 {
        self.rows.iter().filter(|r| r.kind == kind).map(MacRow::total).sum()
    }

    /// CSV with header `layer,kind,macs,aux_ops,total`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,macs,aux_ops,total\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.name, r.kind, r.macs, r.aux_ops, r.total()));
        }
        s.push_str(&format!(
            "TOTAL,,{},{},{}\n",
            self.multiply_accumulates(),
            self.rows.iter().map(|r| r.aux_ops).sum::<u64>(),
            self.total()
        ));
        s
    }
}

pub(crate) fn counts_activation(act: Option<Activation>) -> bool {
    matches!(act, Some(Activation::Relu | Activation::Relu6))
}

/// Per-element ops around a convolution producing `out_numel` elements.
pub(crate) fn conv_aux_ops(desc: &ConvDesc, out_numel: usize) -> u64 {
    let n = out_numel as u64;
    let mut ops = 0;
    if desc.bias {
        ops += n;
    }
    if desc.bn.is_some() {
        ops += 2 * n;
    }
    if counts_activation(desc.act) {
        ops += n;
    }
    ops
}

pub(crate) fn linear_aux_ops(out_features: usize, act: Option<Activation>) -> u64 {
    let n = out_features as u64;
    n + if counts_activation(act) { n } else { 0 }
}

/// Squeeze-excite on a `channels x h x w` map: pooled reads, two biased 1x1
/// convolutions and the inner ReLU.
pub(crate) fn squeeze_aux_ops(channels: usize, squeeze: usize, plane: usize) -> u64 {
    (channels * plane + squeeze + squeeze + channels) as u64
}
