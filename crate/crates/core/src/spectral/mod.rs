//! Hyperspectral reflectance to CIE 1931 XYZ to 8-bit sRGB.
//!
//! Spectra are linearly interpolated onto the 380-780 nm, 5 nm grid (held
//! constant beyond the outermost bands) and integrated with trapezoidal
//! weights against an illuminant and the 2 degree observer. The result is
//! normalized so that a perfect reflector has `Y = 1`.

mod cube;
mod tables;

use std::fmt;
use std::str::FromStr;

pub use cube::{SpectralCube, CUBE_MAGIC, CUBE_VERSION};

use crate::error::{Error, Result};
use crate::preprocess::RgbImage;
use tables::{GRID_LEN, GRID_START, GRID_STEP};

/// Linear sRGB from XYZ (IEC 61966-2-1, D65 white).
pub const XYZ_TO_LINEAR_SRGB: [[f64; 3]; 3] = [
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Illuminant {
    #[default]
    D65,
    A,
    /// Equal energy.
    E,
}

impl FromStr for Illuminant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D65" => Ok(Illuminant::D65),
            "A" => Ok(Illuminant::A),
            "E" => Ok(Illuminant::E),
            _ => Err(Error::usage(format!("unknown illuminant `{s}` (D65, A, E)"))),
        }
    }
}

impl fmt::Display for Illuminant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Illuminant::D65 => "D65",
            Illuminant::A => "A",
            Illuminant::E => "E",
        })
    }
}

/// Observer functions and an illuminant on the shared 5 nm grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorimetricTables {
    pub cmf: [[f64; GRID_LEN]; 3],
    pub illuminant: [f64; GRID_LEN],
}

impl ColorimetricTables {
    pub fn new(illuminant: Illuminant) -> Self {
        let spd = match illuminant {
            Illuminant::D65 => tables::ILLUMINANT_D65,
            Illuminant::A => tables::ILLUMINANT_A,
            Illuminant::E => [1.0; GRID_LEN],
        };
        ColorimetricTables::with_illuminant(spd)
    }

    /// Custom illuminant power on the 380-780 nm, 5 nm grid.
    pub fn with_illuminant(spd: [f64; GRID_LEN]) -> Self {
        ColorimetricTables {
            cmf: [tables::CMF_X, tables::CMF_Y, tables::CMF_Z],
            illuminant: spd,
        }
    }

    pub fn grid() -> impl Iterator<Item = f64> {
        (0..GRID_LEN).map(|i| GRID_START + GRID_STEP * i as f64)
    }

    /// `S(l) * cmf(l) * trapezoid weight` per grid point.
    fn weighted(&self) -> [[f64; GRID_LEN]; 3] {
        let mut out = [[0.0; GRID_LEN]; 3];
        for (c, row) in out.iter_mut().enumerate() {
            for (i, slot) in row.iter_mut().enumerate() {
                let trap = if i == 0 || i == GRID_LEN - 1 { 0.5 } else { 1.0 };
                *slot = trap * GRID_STEP * self.illuminant[i] * self.cmf[c][i];
            }
        }
        out
    }

    /// `1 / sum S * ybar`, so that reflectance 1 gives `Y = 1`.
    pub fn normalization(&self) -> f64 {
        1.0 / self.weighted()[1].iter().sum::<f64>()
    }
}

impl Default for ColorimetricTables {
    fn default() -> Self {
        ColorimetricTables::new(Illuminant::D65)
    }
}

/// Per-band XYZ weights for a fixed set of band wavelengths. Because
/// interpolation and integration are both linear, a spectrum's XYZ is the
/// dot product of its band values with these weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralIntegrator {
    weights: Vec<[f64; 3]>,
}

impl SpectralIntegrator {
    pub fn new(wavelengths: &[f64], tables: &ColorimetricTables) -> Result<Self> {
        validate_wavelengths(wavelengths)?;
        let (first, last) = (wavelengths[0], wavelengths[wavelengths.len() - 1]);
        let grid_end = GRID_START + GRID_STEP * (GRID_LEN - 1) as f64;
        if last < GRID_START || first > grid_end {
            return Err(Error::Domain(format!(
                "bands span {first}-{last} nm, outside the visible 380-780 nm"
            )));
        }
        let weighted = tables.weighted();
        let k = tables.normalization();
        let mut weights = vec![[0.0; 3]; wavelengths.len()];
        for (i, lambda) in ColorimetricTables::grid().enumerate() {
            // Interpolation coefficients of grid point i over the bands.
            let upper = wavelengths.partition_point(|&w| w < lambda);
            let taps: [(usize, f64); 2] = if upper == 0 {
                [(0, 1.0), (0, 0.0)]
            } else if upper == wavelengths.len() {
                [(upper - 1, 1.0), (0, 0.0)]
            } else {
                let (w0, w1) = (wavelengths[upper - 1], wavelengths[upper]);
                let t = (lambda - w0) / (w1 - w0);
                [(upper - 1, 1.0 - t), (upper, t)]
            };
            for (band, coef) in taps {
                for c in 0..3 {
                    weights[band][c] += k * coef * weighted[c][i];
                }
            }
        }
        Ok(SpectralIntegrator { weights })
    }

    pub fn bands(&self) -> usize {
        self.weights.len()
    }

    pub fn integrate(&self, reflectance: impl IntoIterator<Item = f64>) -> [f64; 3] {
        let mut xyz = [0.0; 3];
        for (r, w) in reflectance.into_iter().zip(&self.weights) {
            for c in 0..3 {
                xyz[c] += r * w[c];
            }
        }
        xyz
    }
}

pub(crate) fn validate_wavelengths(wavelengths: &[f64]) -> Result<()> {
    if wavelengths.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 spectral bands, got {}",
            wavelengths.len()
        )));
    }
    if wavelengths.iter().any(|w| !w.is_finite()) || wavelengths.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Domain("wavelengths must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// CIE XYZ of one reflectance spectrum sampled at `wavelengths` (nm).
pub fn spectrum_to_xyz(reflectance: &[f64], wavelengths: &[f64], tables: &ColorimetricTables) -> Result<[f64; 3]> {
    if reflectance.len() != wavelengths.len() {
        return Err(Error::shape(format!(
            "{} reflectance values for {} wavelengths",
            reflectance.len(),
            wavelengths.len()
        )));
    }
    let integrator = SpectralIntegrator::new(wavelengths, tables)?;
    Ok(integrator.integrate(reflectance.iter().copied()))
}

/// sRGB transfer curve on a linear value in `[0, 1]`.
pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// XYZ to 8-bit sRGB: matrix, per-channel clip to `[0, 1]`, transfer curve,
/// `round(v * 255)`.
pub fn xyz_to_srgb(xyz: [f64; 3]) -> [u8; 3] {
    let mut out = [0u8; 3];
    for (o, row) in out.iter_mut().zip(&XYZ_TO_LINEAR_SRGB) {
        let linear = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        let clipped = if linear.is_nan() { 0.0 } else { linear.clamp(0.0, 1.0) };
        *o = (srgb_encode(clipped) * 255.0).round() as u8;
    }
    out
}

/// Renders every pixel of `cube`.
pub fn cube_to_rgb(cube: &SpectralCube, tables: &ColorimetricTables) -> Result<RgbImage> {
    let integrator = SpectralIntegrator::new(cube.wavelengths(), tables)?;
    let plane = cube.width() as usize * cube.height() as usize;
    let data = cube.data();
    let mut pixels = Vec::with_capacity(plane * 3);
    for p in 0..plane {
        let spectrum = (0..cube.bands()).map(|b| data[b * plane + p] as f64);
        pixels.extend_from_slice(&xyz_to_srgb(integrator.integrate(spectrum)));
    }
    RgbImage::new(cube.width(), cube.height(), pixels)
}
