use crate::error::{Error, Result};
use crate::nn::MacCount;
use crate::tensor::Tensor;

/// Geometry of a 2-D convolution.
///
/// `groups == in_channels` expresses a depthwise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, single group.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            out_channels,
            in_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            groups: 1,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.stride == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::shape(format!(
                "groups, stride and kernel extents must be positive in {self:?}"
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::shape(format!("channel counts must be positive in {self:?}")));
        }
        if !self.in_channels.is_multiple_of(self.groups) {
            return Err(Error::shape(format!(
                "in_channels {} not divisible by groups {}",
                self.in_channels, self.groups
            )));
        }
        if !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::shape(format!(
                "out_channels {} not divisible by groups {}",
                self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    /// Weight tensor shape `[out, in / groups, kh, kw]`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel_h,
            self.kernel_w,
        ]
    }

    /// Output spatial extents for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let out = |extent: usize, kernel: usize, axis: &str| {
            let padded = extent + 2 * self.padding;
            if padded < kernel {
                return Err(Error::shape(format!(
                    "{axis}: padded extent {padded} smaller than kernel {kernel}"
                )));
            }
            Ok((padded - kernel) / self.stride + 1)
        };
        Ok((out(h, self.kernel_h, "height")?, out(w, self.kernel_w, "width")?))
    }

    /// Multiply-accumulates for one application on an `h x w` input.
    pub fn macs(&self, h: usize, w: usize) -> Result<MacCount> {
        let (oh, ow) = self.output_hw(h, w)?;
        let per_output = (self.in_channels / self.groups) * self.kernel_h * self.kernel_w;
        Ok(MacCount((self.out_channels * oh * ow * per_output) as u64))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Cross-correlation of a `C_in x H x W` input with `weights`.
///
/// Out-of-bounds taps read zero.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    spec: &ConvSpec,
) -> Result<(Tensor, MacCount)> {
    spec.validate()?;
    let (c, h, w) = input.chw()?;
    if c != spec.in_channels {
        return Err(Error::shape(format!(
            "input channels: got {c}, spec expects {}",
            spec.in_channels
        )));
    }
    let expected = spec.weight_shape();
    if weights.shape() != expected {
        return Err(Error::shape(format!(
            "weight shape: got {:?}, expected {expected:?}",
            weights.shape()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(Error::shape(format!(
                "bias length: got {:?}, expected [{}]",
                b.shape(),
                spec.out_channels
            )));
        }
    }
    let (oh, ow) = spec.output_hw(h, w)?;
    let plane = oh * ow;

    let mut out = vec![0.0f32; spec.out_channels * plane];
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_exact_mut(plane).zip(b.data()) {
            row.fill(bv);
        }
    }

    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    if cin_g == 1 && cout_g == 1 {
        depthwise(input.data(), weights.data(), &mut out, spec, h, w, oh, ow);
    } else {
        let k = cin_g * spec.kernel_h * spec.kernel_w;
        let cols;
        let cols_ref: &[f32] = if spec.is_pointwise() {
            input.data()
        } else {
            cols = im2col(input.data(), spec, c, h, w, oh, ow);
            &cols
        };
        for g in 0..spec.groups {
            let a = &weights.data()[g * cout_g * k..(g + 1) * cout_g * k];
            let b = &cols_ref[g * k * plane..(g + 1) * k * plane];
            let cm = &mut out[g * cout_g * plane..(g + 1) * cout_g * plane];
            gemm_accumulate(cout_g, k, plane, a, b, cm);
        }
    }

    let macs = spec.macs(h, w)?;
    Ok((Tensor::new(vec![spec.out_channels, oh, ow], out)?, macs))
}

/// `c += a * b` with `a: m x k`, `b: k x n`, `c: m x n`, all row-major.
fn gemm_accumulate(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the slice lengths match the row-major strides passed below.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Range of output columns whose input column `o * stride + offset - padding`
/// falls inside `0..extent`.
fn valid_range(out_extent: usize, extent: usize, offset: usize, stride: usize, padding: usize) -> (usize, usize) {
    // o * stride + offset >= padding
    let lo = if offset >= padding {
        0
    } else {
        (padding - offset).div_ceil(stride)
    };
    // o * stride + offset - padding <= extent - 1
    let hi = if extent + padding <= offset {
        0
    } else {
        ((extent - 1 + padding - offset) / stride + 1).min(out_extent)
    };
    (lo.min(hi), hi)
}

/// Rows ordered `(channel, ky, kx)`, columns ordered `(oy, ox)`.
fn im2col(x: &[f32], spec: &ConvSpec, c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let plane = oh * ow;
    let mut cols = vec![0.0f32; c * kh * kw * plane];
    let mut row = 0;
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(oh, h, ky, s, p);
            for kx in 0..kw {
                let (ox_lo, ox_hi) = valid_range(ow, w, kx, s, p);
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let src_row = &src[iy * w..(iy + 1) * w];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if ox_lo == ox_hi {
                        continue;
                    }
                    if s == 1 {
                        let start = ox_lo + kx - p;
                        dst_row[ox_lo..ox_hi].copy_from_slice(&src_row[start..start + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            dst_row[ox] = src_row[ox * s + kx - p];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// One input channel per output channel. Taps accumulate in `(ky, kx)` order.
#[allow(clippy::too_many_arguments)]
fn depthwise(x: &[f32], weights: &[f32], out: &mut [f32], spec: &ConvSpec, h: usize, w: usize, oh: usize, ow: usize) {
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let plane = oh * ow;
    for ch in 0..spec.out_channels {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * plane..(ch + 1) * plane];
        let kernel = &weights[ch * kh * kw..(ch + 1) * kh * kw];
        for ky in 0..kh {
            let (oy_lo, oy_hi) = valid_range(oh, h, ky, s, p);
            for kx in 0..kw {
                let wv = kernel[ky * kw + kx];
                let (ox_lo, ox_hi) = valid_range(ow, w, kx, s, p);
                for oy in oy_lo..oy_hi {
                    let iy = oy * s + ky - p;
                    let src_row = &src[iy * w..(iy + 1) * w];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if ox_lo == ox_hi {
                        continue;
                    }
                    if s == 1 {
                        let start = ox_lo + kx - p;
                        let n = ox_hi - ox_lo;
                        for (d, &v) in dst_row[ox_lo..ox_hi].iter_mut().zip(&src_row[start..start + n]) {
                            *d += wv * v;
                        }
                    } else {
                        for ox in ox_lo..ox_hi {
                            dst_row[ox] += wv * src_row[ox * s + kx - p];
                        }
                    }
                }
            }
        }
    }
}
