use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::validate_wavelengths;

pub const CUBE_MAGIC: &[u8; 4] = b"TKSC";
pub const CUBE_VERSION: u8 = 1;

/// Reflectance cube stored band-plane by band-plane.
///
/// File layout, little-endian: `"TKSC" | u8 version | u32 width | u32 height
/// | u32 bands | bands x f32 wavelength (nm) | bands x height x width f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: u32,
    height: u32,
    wavelengths: Vec<f64>,
    data: Vec<f32>,
}

impl SpectralCube {
    pub fn new(width: u32, height: u32, wavelengths: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("cube of {width}x{height} pixels")));
        }
        validate_wavelengths(&wavelengths)?;
        let expected = (width as usize)
            .checked_mul(height as usize)
            .and_then(|p| p.checked_mul(wavelengths.len()))
            .ok_or_else(|| Error::shape("cube size overflows"))?;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "cube data has {} values, expected {expected}",
                data.len()
            )));
        }
        Ok(SpectralCube {
            width,
            height,
            wavelengths,
            data,
        })
    }

    /// Every pixel carries the same spectrum.
    pub fn uniform(width: u32, height: u32, wavelengths: Vec<f64>, spectrum: &[f32]) -> Result<Self> {
        let plane = width as usize * height as usize;
        let data = spectrum.iter().flat_map(|&v| std::iter::repeat_n(v, plane)).collect();
        SpectralCube::new(width, height, wavelengths, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn spectrum(&self, x: u32, y: u32) -> Vec<f32> {
        let plane = self.width as usize * self.height as usize;
        let p = y as usize * self.width as usize + x as usize;
        (0..self.bands()).map(|b| self.data[b * plane + p]).collect()
    }

    pub fn write_to<W: Write>(&self, sink: &mut W) -> Result<()> {
        sink.write_all(CUBE_MAGIC)?;
        sink.write_all(&[CUBE_VERSION])?;
        sink.write_all(&self.width.to_le_bytes())?;
        sink.write_all(&self.height.to_le_bytes())?;
        sink.write_all(&(self.bands() as u32).to_le_bytes())?;
        for &w in &self.wavelengths {
            sink.write_all(&(w as f32).to_le_bytes())?;
        }
        for &v in &self.data {
            sink.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(source: &mut R) -> Result<Self> {
        let mut header = [0u8; 17];
        read_exact(source, &mut header)?;
        if &header[..4] != CUBE_MAGIC {
            return Err(Error::format("not a TKSC cube (bad magic)"));
        }
        if header[4] != CUBE_VERSION {
            return Err(Error::format(format!("unsupported cube version {}", header[4])));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let (width, height, bands) = (word(5), word(9), word(13));
        let values = (width as u64)
            .checked_mul(height as u64)
            .and_then(|v| v.checked_mul(bands as u64))
            .filter(|&v| v <= isize::MAX as u64 / 4)
            .ok_or_else(|| Error::format(format!("cube of {width}x{height}x{bands} is too large")))?;
        let wavelengths = read_f32s(source, bands as usize)?
            .into_iter()
            .map(f64::from)
            .collect::<Vec<_>>();
        let data = read_f32s(source, values as usize)?;
        let mut probe = [0u8; 1];
        if source.read(&mut probe)? != 0 {
            return Err(Error::format("trailing bytes after cube data"));
        }
        SpectralCube::new(width, height, wavelengths, data).map_err(|e| Error::format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        SpectralCube::read_from(&mut BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn read_exact<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("cube file is truncated"),
        _ => Error::Stream(e),
    })
}

fn read_f32s<R: Read>(source: &mut R, count: usize) -> Result<Vec<f32>> {
    let mut out = Vec::new();
    let mut buf = vec![0u8; 4 * count.min(1 << 16)];
    let mut left = count;
    while left > 0 {
        let n = left.min(1 << 16);
        read_exact(source, &mut buf[..4 * n])?;
        out.extend(buf[..4 * n].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
        left -= n;
    }
    Ok(out)
}
