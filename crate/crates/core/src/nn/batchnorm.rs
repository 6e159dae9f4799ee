use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Folds an inference-mode batch normalization into the preceding layer.
///
/// `conv_weights` has the output channel as its leading extent. Returns
/// `(w', b')` with `w' = w * g` and `b' = (b - mean) * g + beta` per output
/// channel, where `g = gamma / sqrt(var + eps)`.
pub fn fold_batchnorm(
    conv_weights: &Tensor,
    conv_bias: Option<&Tensor>,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    epsilon: f32,
) -> Result<(Tensor, Tensor)> {
    let out = *conv_weights
        .shape()
        .first()
        .ok_or_else(|| Error::shape("weights must have an output-channel extent"))?;
    for (name, len) in [
        ("gamma", gamma.len()),
        ("beta", beta.len()),
        ("running_mean", running_mean.len()),
        ("running_var", running_var.len()),
    ] {
        if len != out {
            return Err(Error::shape(format!(
                "{name} has {len} entries, weights have {out} output channels"
            )));
        }
    }
    if let Some(b) = conv_bias {
        if b.len() != out {
            return Err(Error::shape(format!(
                "bias has {} entries, weights have {out} output channels",
                b.len()
            )));
        }
    }
    if let Some(v) = running_var.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::Domain(format!("running variance {v} is negative")));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Domain(format!("epsilon {epsilon} is negative")));
    }

    let per_channel = conv_weights.len().checked_div(out).unwrap_or(0);
    let mut weights = conv_weights.data().to_vec();
    let mut bias = Vec::with_capacity(out);
    for o in 0..out {
        let scale = (gamma[o] as f64 / (running_var[o] as f64 + epsilon as f64).sqrt()) as f32;
        if !scale.is_finite() {
            return Err(Error::Domain(format!(
                "channel {o}: zero variance with zero epsilon"
            )));
        }
        for w in &mut weights[o * per_channel..(o + 1) * per_channel] {
            *w *= scale;
        }
        let b = conv_bias.map_or(0.0, |b| b.data()[o]);
        bias.push((b - running_mean[o]) * scale + beta[o]);
    }
    Ok((
        Tensor::new(conv_weights.shape().to_vec(), weights)?,
        Tensor::from_vec(bias),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{conv2d, ConvSpec};

    fn weights() -> Tensor {
        Tensor::new(vec![2, 1, 1, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap()
    }

    #[test]
    fn identity_normalization_is_noop() {
        let w = weights();
        let b = Tensor::from_vec(vec![0.25, -1.0]);
        let (fw, fb) =
            fold_batchnorm(&w, Some(&b), &[1.0; 2], &[0.0; 2], &[0.0; 2], &[1.0; 2], 0.0).unwrap();
        assert_eq!(fw, w);
        assert_eq!(fb.data(), b.data());
    }

    #[test]
    fn doubling_gamma_and_unit_beta() {
        let w = weights();
        let b = Tensor::from_vec(vec![0.25, -1.0]);
        let (fw, fb) =
            fold_batchnorm(&w, Some(&b), &[2.0; 2], &[1.0; 2], &[0.0; 2], &[1.0; 2], 0.0).unwrap();
        let doubled: Vec<f32> = w.data().iter().map(|v| v * 2.0).collect();
        assert_eq!(fw.data(), doubled.as_slice());
        assert_eq!(fb.data(), &[1.5, -1.0]);
    }

    #[test]
    fn folded_conv_matches_conv_then_normalize() {
        let spec = ConvSpec::new(2, 2, 1, 1, 0).with_groups(1);
        let w = Tensor::new(vec![2, 2, 1, 1], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
        let x = Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let (gamma, beta, mean, var, eps) = ([1.5, 0.5], [0.1, -0.2], [0.3, -0.4], [0.8, 2.0], 1e-5);
        let (plain, _) = conv2d(&x, &w, None, &spec).unwrap();
        let (fw, fb) = fold_batchnorm(&w, None, &gamma, &beta, &mean, &var, eps).unwrap();
        let (folded, _) = conv2d(&x, &fw, Some(&fb), &spec).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let v = plain.data()[o * 2 + i];
                let expect = (v - mean[o]) / (var[o] + eps).sqrt() * gamma[o] + beta[o];
                assert!((folded.data()[o * 2 + i] - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn length_mismatch_and_negative_variance() {
        let w = weights();
        assert!(matches!(
            fold_batchnorm(&w, None, &[1.0; 3], &[0.0; 2], &[0.0; 2], &[1.0; 2], 1e-5),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            fold_batchnorm(&w, None, &[1.0; 2], &[0.0; 2], &[0.0; 2], &[1.0, -0.1], 1e-5),
            Err(Error::Domain(_))
        ));
    }
}
