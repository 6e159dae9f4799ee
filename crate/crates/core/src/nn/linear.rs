use crate::error::{Error, Result};
use crate::nn::MacCount;
use crate::tensor::Tensor;

/// `y = W x + b` for `W: m x n`. `x` may have any shape holding `n` elements.
pub fn linear(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(Tensor, MacCount)> {
    let (m, n) = match *weights.shape() {
        [m, n] => (m, n),
        _ => {
            return Err(Error::shape(format!(
                "weights must be m x n, got {:?}",
                weights.shape()
            )))
        }
    };
    if x.len() != n {
        return Err(Error::shape(format!(
            "input length {} does not match weight columns {n}",
            x.len()
        )));
    }
    if bias.len() != m {
        return Err(Error::shape(format!(
            "bias length {} does not match weight rows {m}",
            bias.len()
        )));
    }
    let xs = x.data();
    let y = weights
        .data()
        .chunks_exact(n.max(1))
        .take(m)
        .zip(bias.data())
        .map(|(row, &b)| row.iter().zip(xs).fold(0.0f32, |acc, (w, v)| acc + w * v) + b)
        .collect();
    Ok((Tensor::from_vec(y), MacCount((m * n) as u64)))
}
