use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Nonlinearities used by the two backbones and the classification head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Relu6,
    HardSigmoid,
    HardSwish,
    Sigmoid,
    /// Normalizes over the last extent.
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Relu6 => "relu6",
            Activation::HardSigmoid => "hard_sigmoid",
            Activation::HardSwish => "hard_swish",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    /// Scalar form; `None` for softmax, which is not elementwise.
    pub fn scalar(self, x: f32) -> Option<f32> {
        let v = match self {
            Activation::Relu => x.max(0.0),
            Activation::Relu6 => x.clamp(0.0, 6.0),
            Activation::HardSigmoid => (x + 3.0).clamp(0.0, 6.0) / 6.0,
            Activation::HardSwish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Softmax => return None,
        };
        Some(v)
    }

    /// Applies the activation to `values`, treating them as a single slice
    /// for softmax.
    pub fn apply_in_place(self, values: &mut [f32]) {
        match self {
            Activation::Softmax => softmax_slice(values),
            Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
            _ => {
                for v in values.iter_mut() {
                    // Elementwise kinds always yield Some.
                    *v = self.scalar(*v).unwrap_or(*v);
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "relu" => Activation::Relu,
            "relu6" => Activation::Relu6,
            "hard_sigmoid" | "hardsigmoid" => Activation::HardSigmoid,
            "hard_swish" | "hardswish" => Activation::HardSwish,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            other => return Err(Error::usage(format!("unknown activation `{other}`"))),
        })
    }
}

fn softmax_slice(values: &mut [f32]) {
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Applies `kind` to a copy of `x`. Softmax runs over each slice of the last
/// extent.
pub fn activation(kind: Activation, x: &Tensor) -> Result<Tensor> {
    let mut out = x.clone();
    if kind == Activation::Softmax {
        let last = x.shape().last().copied().unwrap_or(1);
        if last == 0 {
            return Ok(out);
        }
        for slice in out.data_mut().chunks_exact_mut(last) {
            softmax_slice(slice);
        }
    } else {
        kind.apply_in_place(out.data_mut());
    }
    Ok(out)
}
