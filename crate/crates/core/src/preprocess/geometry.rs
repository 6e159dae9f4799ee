use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::RgbImage;

/// Side of the square canvas images are letterboxed into.
pub const CANVAS: u32 = 640;

/// Axis-aligned box in pixel units, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn full(image: &RgbImage) -> Self {
        BoundingBox::new(0, 0, image.width(), image.height())
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x as u64 + self.w as u64 <= width as u64
            && self.y as u64 + self.h as u64 <= height as u64
    }
}

/// Exactly the boxed region of `image`.
pub fn crop_bbox(image: &RgbImage, bbox: BoundingBox) -> Result<RgbImage> {
    if !bbox.fits(image.width(), image.height()) {
        return Err(Error::Bounds {
            bbox: (bbox.x, bbox.y, bbox.w, bbox.h),
            width: image.width(),
            height: image.height(),
        });
    }
    let stride = 3 * image.width() as usize;
    let mut pixels = Vec::with_capacity(3 * bbox.w as usize * bbox.h as usize);
    for y in bbox.y..bbox.y + bbox.h {
        let start = y as usize * stride + 3 * bbox.x as usize;
        pixels.extend_from_slice(&image.pixels()[start..start + 3 * bbox.w as usize]);
    }
    RgbImage::new(bbox.w, bbox.h, pixels)
}

/// Where the scaled content sits inside a letterboxed canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub content_w: u32,
    pub content_h: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

/// Content extents after scaling by `target / max(width, height)`, rounded
/// to the nearest pixel, centered with the odd pixel of padding at the end.
pub fn letterbox_placement(width: u32, height: u32, target: u32) -> Placement {
    let (w, h, t) = (width as u64, height as u64, target as u64);
    let long = w.max(h);
    let scaled = |v: u64| (((2 * v * t + long) / (2 * long)) as u32).clamp(1, target);
    let (content_w, content_h) = (scaled(w), scaled(h));
    Placement {
        content_w,
        content_h,
        offset_x: (target - content_w) / 2,
        offset_y: (target - content_h) / 2,
    }
}

/// Per-output-index source taps `(i0, i1, frac)` for half-pixel-center
/// bilinear sampling from `src` to `dst` samples.
fn taps(src: u32, dst: u32) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src as usize - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resample to `w x h`, as planar `f32` channels on the 0..=255
/// scale (`3 x h x w`).
pub(crate) fn resample_planar(image: &RgbImage, w: u32, h: u32) -> Vec<f32> {
    let xt = taps(image.width(), w);
    let yt = taps(image.height(), h);
    let src_w = image.width() as usize;
    let px = image.pixels();
    let plane = w as usize * h as usize;
    let mut out = vec![0.0f32; 3 * plane];
    for (oy, &(y0, y1, fy)) in yt.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xt.iter().enumerate() {
            for c in 0..3 {
                let at = |x: usize, y: usize| px[3 * (y * src_w + x) + c] as f32;
                let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
                let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
                out[c * plane + oy * w as usize + ox] = top + (bottom - top) * fy;
            }
        }
    }
    out
}

/// Bilinear resize with half-pixel centers.
pub fn resize_bilinear(image: &RgbImage, w: u32, h: u32) -> Result<RgbImage> {
    if w == 0 || h == 0 {
        return Err(Error::shape("resize target must be positive"));
    }
    let planar = resample_planar(image, w, h);
    let plane = w as usize * h as usize;
    let mut pixels = vec![0u8; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            pixels[3 * i + c] = planar[c * plane + i].round().clamp(0.0, 255.0) as u8;
        }
    }
    RgbImage::new(w, h, pixels)
}

/// Aspect-preserving resize into a `target x target` canvas, scaling up or
/// down, with exact black padding around the centered content.
pub fn letterbox(image: &RgbImage, target: u32) -> Result<RgbImage> {
    if target == 0 {
        return Err(Error::shape("letterbox target must be positive"));
    }
    let p = letterbox_placement(image.width(), image.height(), target);
    let content = resize_bilinear(image, p.content_w, p.content_h)?;
    let t = target as usize;
    let mut pixels = vec![0u8; 3 * t * t];
    let row_bytes = 3 * p.content_w as usize;
    for y in 0..p.content_h as usize {
        let dst = 3 * ((y + p.offset_y as usize) * t + p.offset_x as usize);
        pixels[dst..dst + row_bytes].copy_from_slice(&content.pixels()[y * row_bytes..(y + 1) * row_bytes]);
    }
    RgbImage::new(target, target, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| [(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]).unwrap()
    }

    #[test]
    fn full_box_is_identity() {
        let img = gradient(37, 21);
        assert_eq!(crop_bbox(&img, BoundingBox::full(&img)).unwrap(), img);
    }

    #[test]
    fn crop_coordinates() {
        let img = gradient(300, 300);
        let out = crop_bbox(&img, BoundingBox::new(10, 20, 100, 200)).unwrap();
        assert_eq!((out.width(), out.height()), (100, 200));
        assert_eq!(out.pixel(0, 0), img.pixel(10, 20));
        assert_eq!(out.pixel(99, 199), img.pixel(109, 219));
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = gradient(300, 300);
        assert!(matches!(
            crop_bbox(&img, BoundingBox::new(250, 250, 100, 100)),
            Err(Error::Bounds { .. })
        ));
        assert!(crop_bbox(&img, BoundingBox::new(0, 0, 0, 10)).is_err());
    }

    #[test]
    fn placement_examples() {
        let p = letterbox_placement(800, 600, 640);
        assert_eq!((p.content_w, p.content_h, p.offset_x, p.offset_y), (640, 480, 0, 80));
        let p = letterbox_placement(100, 50, 640);
        assert_eq!((p.content_w, p.content_h, p.offset_y), (640, 320, 160));
        let p = letterbox_placement(640, 640, 640);
        assert_eq!((p.content_w, p.content_h, p.offset_x, p.offset_y), (640, 640, 0, 0));
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = gradient(64, 48);
        assert_eq!(resize_bilinear(&img, 64, 48).unwrap(), img);
    }

    #[test]
    fn letterbox_800x600_pads_80_rows() {
        let img = RgbImage::filled(800, 600, [200, 100, 50]).unwrap();
        let out = letterbox(&img, 640).unwrap();
        assert_eq!(out.pixel(320, 79), [0, 0, 0]);
        assert_eq!(out.pixel(320, 80), [200, 100, 50]);
        assert_eq!(out.pixel(320, 559), [200, 100, 50]);
        assert_eq!(out.pixel(320, 560), [0, 0, 0]);
    }
}
