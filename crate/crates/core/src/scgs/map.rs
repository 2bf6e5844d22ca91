//! Per-pixel class confidence maps and their binary file format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::image::bilinear_cell;
use crate::geom::{Label, Vec2};
use crate::num::Real;

const MAGIC: &[u8; 4] = b"SCGS";
const CHANNELS: u32 = 4;
/// Allowed deviation of a pixel's confidences from summing to one.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Row-major map of 4-class confidences (Upper, Lower, Fully, NonClothing).
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMap<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[T; 4]>,
}

impl<T: Real> SemanticMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<[T; 4]>) -> Result<Self> {
        let map = Self { width, height, data };
        map.validate()?;
        Ok(map)
    }

    /// Every pixel certain of `label`.
    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        Self { width, height, data: vec![label.one_hot(); width * height] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.data.len() != self.width * self.height {
            return Err(Error::validation(format!(
                "semantic map of {}x{} holds {} pixels",
                self.width,
                self.height,
                self.data.len()
            )));
        }
        for (i, c) in self.data.iter().enumerate() {
            let sum: T = c.iter().copied().sum();
            if c.iter().any(|&v| !(v >= T::zero())) || (sum - T::one()).abs() > T::lit(SUM_TOLERANCE) {
                return Err(Error::validation(format!(
                    "pixel ({}, {}) confidences are not a distribution",
                    i % self.width,
                    i / self.width
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 4] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: [T; 4]) {
        self.data[y * self.width + x] = c;
    }

    /// Bilinear blend of the four pixels around `p` (centers at half-integers),
    /// or `None` outside the image.
    pub fn sample_confidence(&self, p: Vec2<T>) -> Option<[T; 4]> {
        let (w, h) = (T::from_usize_lossy(self.width), T::from_usize_lossy(self.height));
        if !(p.x >= T::zero() && p.y >= T::zero() && p.x <= w && p.y <= h) {
            return None;
        }
        let (x0, y0, fx, fy) = bilinear_cell(p, self.width, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let (gx, gy) = (T::one() - fx, T::one() - fy);
        Some(std::array::from_fn(|k| gx * gy * a[k] + fx * gy * b[k] + gx * fy * c[k] + fx * fy * d[k]))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        for v in [self.width as u32, self.height as u32, CHANNELS] {
            out.write_all(&v.to_le_bytes())?;
        }
        for c in &self.data {
            for &v in c {
                out.write_all(&v.as_f32().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::parse_byte(0, "missing SCGS magic"));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let (width, height, channels) = (word(4) as usize, word(8) as usize, word(12));
        if channels != CHANNELS {
            return Err(Error::parse_byte(12, format!("expected {CHANNELS} channels, found {channels}")));
        }
        let expected = 16 + width * height * 16;
        if bytes.len() != expected {
            return Err(Error::parse_byte(
                bytes.len().min(expected),
                format!("expected {expected} bytes for a {width}x{height} map, found {}", bytes.len()),
            ));
        }
        let data = bytes[16..]
            .chunks_exact(16)
            .map(|px| std::array::from_fn(|k| T::lit(f32::from_le_bytes(px[4 * k..4 * k + 4].try_into().unwrap()) as f64)))
            .collect();
        Self::new(width, height, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(Error::open(path)?))
    }
}
