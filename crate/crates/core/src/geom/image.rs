//! Float RGB images and PNG IO.

use std::path::Path;

use super::vec::Vec2;
use crate::error::{Error, Result};
use crate::num::{cast, Real};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[T; 3]>,
}

impl<T: Real> RgbImage<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![[T::zero(); 3]; width * height] }
    }

    pub fn filled(width: usize, height: usize, c: [T; 3]) -> Self {
        Self { width, height, data: vec![c; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: [T; 3]) {
        self.data[y * self.width + x] = c;
    }

    /// Bilinear lookup at a continuous pixel coordinate (pixel centers at
    /// half-integers), clamping to the border pixels.
    pub fn bilinear(&self, p: Vec2<T>) -> [T; 3] {
        let (x0, y0, fx, fy) = bilinear_cell(p, self.width, self.height);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [T::zero(); 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bot = c[k] + (d[k] - c[k]) * fx;
            out[k] = top + (bot - top) * fy;
        }
        out
    }

    /// 2x2 box downsample (odd trailing rows/columns are averaged with what exists).
    pub fn downsample(&self) -> Self {
        let w = self.width.div_ceil(2).max(1);
        let h = self.height.div_ceil(2).max(1);
        let mut out = Self::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [T::zero(); 3];
                let mut n = 0usize;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (sx, sy) = (2 * x + dx, 2 * y + dy);
                        if sx < self.width && sy < self.height {
                            let c = self.get(sx, sy);
                            for k in 0..3 {
                                acc[k] += c[k];
                            }
                            n += 1;
                        }
                    }
                }
                let inv = T::one() / T::from_usize_lossy(n);
                out.set(x, y, [acc[0] * inv, acc[1] * inv, acc[2] * inv]);
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> RgbImage<U> {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|c| [cast(c[0]), cast(c[1]), cast(c[2])]).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in buf.pixels_mut().enumerate() {
            let c = self.data[i];
            px.0 = [to_u8(c[0]), to_u8(c[1]), to_u8(c[2])];
        }
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| {
                let s = T::lit(1.0 / 255.0);
                [T::lit(p.0[0] as f64) * s, T::lit(p.0[1] as f64) * s, T::lit(p.0[2] as f64) * s]
            })
            .collect();
        Ok(Self { width: w as usize, height: h as usize, data })
    }
}

fn to_u8<T: Real>(c: T) -> u8 {
    (c.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Integer cell and fractional offsets for a bilinear lookup in a
/// `width × height` pixel lattice whose centers sit at half-integers.
pub(crate) fn bilinear_cell<T: Real>(p: Vec2<T>, width: usize, height: usize) -> (usize, usize, T, T) {
    let lx = (p.x - T::half()).max(T::zero()).min(T::from_usize_lossy(width - 1));
    let ly = (p.y - T::half()).max(T::zero()).min(T::from_usize_lossy(height - 1));
    // both are non-negative, so truncation floors
    let x0 = lx.to_usize().unwrap_or(0).min(width - 1);
    let y0 = ly.to_usize().unwrap_or(0).min(height - 1);
    (x0, y0, lx - T::from_usize_lossy(x0), ly - T::from_usize_lossy(y0))
}
