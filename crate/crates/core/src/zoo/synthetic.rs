//! Deterministic stand-in parameters.
//!
//! Every value is a pure function of `(seed, tensor name, element index)`,
//! so the same store can be regenerated bit-for-bit by any implementation of
//! the recipe below (the fixture generator under `tools/` does it in numpy):
//!
//! 1. `base = seed ^ fnv1a64(name)`
//! 2. element `i`: `z = splitmix64_mix(base + (i + 1) * 0x9E3779B97F4A7C15)`
//! 3. `t = ((z >> 41) as f32 / 2^23) * 2 - 1`, uniform in `[-1, 1)`
//! 4. `value = t * half_width + center`, in `f32`
//!
//! `(center, half_width)` depends on the tensor's role: He-uniform for
//! convolution and linear weights, a per-architecture range for batch-norm
//! scales (see [`bn_scale`]), `+-0.1` for biases and running means and
//! `1 +- 0.5` for running variances.

use crate::error::Result;
use crate::tensor::Tensor;
use crate::weights::WeightStore;
use crate::zoo::{required_tensors, Architecture};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Batch-norm scale `(center, half_width)`. Picked so that backbone outputs
/// stay O(1) and still vary with the input.
pub fn bn_scale(arch: Architecture) -> (f32, f32) {
    match arch {
        Architecture::MobileNetV3Small => (0.95, 0.05),
        Architecture::ResNet34 => (0.6, 0.1),
    }
}

fn role(name: &str, shape: &[usize], bn: (f32, f32)) -> (f32, f32) {
    if name.ends_with(".running_var") {
        (1.0, 0.5)
    } else if name.ends_with(".running_mean") || name.ends_with(".bias") {
        (0.0, 0.1)
    } else if shape.len() >= 2 {
        let fan_in: usize = shape[1..].iter().product();
        (0.0, (6.0 / fan_in as f64).sqrt() as f32)
    } else {
        bn
    }
}

/// One synthetic tensor.
pub fn synthetic_tensor(seed: u64, name: &str, shape: &[usize], bn: (f32, f32)) -> Result<Tensor> {
    let (center, half_width) = role(name, shape, bn);
    let base = seed ^ fnv1a64(name.as_bytes());
    let n: usize = shape.iter().product();
    let data = (0..n as u64)
        .map(|i| {
            let z = splitmix64_mix(base.wrapping_add((i + 1).wrapping_mul(GOLDEN)));
            let t = (z >> 41) as f32 / (1u32 << 23) as f32 * 2.0 - 1.0;
            t * half_width + center
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Full parameter store for `arch`, head included, in `state_dict` order.
pub fn synthetic_weights(arch: Architecture, seed: u64) -> Result<WeightStore> {
    let mut store = WeightStore::new();
    for (name, shape) in required_tensors(arch) {
        let t = synthetic_tensor(seed, &name, &shape, bn_scale(arch))?;
        store.insert(name, t)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn values_within_role_bounds() {
        let var = synthetic_tensor(7, "bn1.running_var", &[64], (0.6, 0.1)).unwrap();
        assert!(var.data().iter().all(|v| (0.5..1.5).contains(v)));
        let w = synthetic_tensor(7, "conv1.weight", &[64, 3, 7, 7], (0.6, 0.1)).unwrap();
        let bound = (6.0f64 / 147.0).sqrt() as f32;
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synthetic_tensor(1, "fc.weight", &[4, 4], (0.6, 0.1)).unwrap();
        assert_eq!(a, synthetic_tensor(1, "fc.weight", &[4, 4], (0.6, 0.1)).unwrap());
        assert_ne!(a, synthetic_tensor(2, "fc.weight", &[4, 4], (0.6, 0.1)).unwrap());
    }
}
