use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean of each channel plane, returned as `C x 1 x 1`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let plane = h * w;
    if plane == 0 {
        return Err(Error::shape("global average pool over an empty plane"));
    }
    let means = x
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().sum::<f32>() / plane as f32)
        .collect();
    Tensor::new(vec![c, 1, 1], means)
}

/// Max pooling with implicit negative-infinity padding.
pub fn max_pool2d(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if kernel == 0 || stride == 0 {
        return Err(Error::shape("max pool kernel and stride must be positive"));
    }
    if padding * 2 > kernel {
        return Err(Error::shape("max pool padding exceeds half the kernel"));
    }
    if h + 2 * padding < kernel || w + 2 * padding < kernel {
        return Err(Error::shape(format!(
            "max pool kernel {kernel} larger than padded {h}x{w} input"
        )));
    }
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let mut out = Vec::with_capacity(c * oh * ow);
    for plane in x.data().chunks_exact(h * w) {
        for oy in 0..oh {
            let y0 = (oy * stride).saturating_sub(padding);
            let y1 = (oy * stride + kernel - padding).min(h);
            for ox in 0..ow {
                let x0 = (ox * stride).saturating_sub(padding);
                let x1 = (ox * stride + kernel - padding).min(w);
                let mut m = f32::NEG_INFINITY;
                for iy in y0..y1 {
                    for &v in &plane[iy * w + x0..iy * w + x1] {
                        m = m.max(v);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}
