use crate::error::Result;
use crate::preprocess::geometry::{crop_bbox, letterbox, resample_planar, BoundingBox, CANVAS};
use crate::preprocess::RgbImage;
use crate::tensor::Tensor;
use crate::zoo::INPUT_SHAPE;

/// ImageNet per-channel mean of `[0, 1]` intensities.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
/// ImageNet per-channel standard deviation of `[0, 1]` intensities.
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Maps an 8-bit intensity (possibly fractional after resampling) to the
/// normalized model scale of channel `c`.
pub fn normalize_value(v: f32, c: usize) -> f32 {
    (v / 255.0 - IMAGENET_MEAN[c]) / IMAGENET_STD[c]
}

/// Bilinear resize to `224 x 224` and ImageNet normalization, channels first.
///
/// Meant for canonical `640 x 640` letterboxed frames; other sizes are
/// resampled the same way.
pub fn to_model_input(image: &RgbImage) -> Result<Tensor> {
    let [_, h, w] = INPUT_SHAPE;
    let mut planar = resample_planar(image, w as u32, h as u32);
    let plane = h * w;
    for (c, chunk) in planar.chunks_exact_mut(plane).enumerate() {
        for v in chunk {
            *v = normalize_value(*v, c);
        }
    }
    Tensor::new(INPUT_SHAPE.to_vec(), planar)
}

/// Crop, letterbox to the 640 canvas: the canonical intermediate image.
pub fn canonical_frame(image: &RgbImage, bbox: BoundingBox) -> Result<RgbImage> {
    letterbox(&crop_bbox(image, bbox)?, CANVAS)
}

/// Full pipeline from a raw photograph to a model input.
pub fn prepare(image: &RgbImage, bbox: BoundingBox) -> Result<Tensor> {
    to_model_input(&canonical_frame(image, bbox)?)
}
