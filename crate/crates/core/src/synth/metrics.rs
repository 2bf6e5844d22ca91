//! Image and geometry evaluation metrics.

use crate::error::{Error, Result};
use crate::geom::{KdTree, RgbImage, TriMesh};
use crate::num::Real;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_size<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::validation(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Err(Error::Empty("images have no pixels".into()));
    }
    Ok(())
}

pub fn mse<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<f64> {
    same_size(a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .flat_map(|(p, q)| (0..3).map(move |k| (p[k].as_f64() - q[k].as_f64()).powi(2)))
        .sum();
    Ok(sum / (3 * a.data.len()) as f64)
}

/// `10·log10(1/MSE)` for channels in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

/// Normalized 1-D Gaussian taps.
fn gaussian_taps() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> =
        (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of a `w × h` plane.
fn filter(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|k| taps[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM over every fully contained 11×11 Gaussian window
/// (σ = 1.5), averaged over the three channels, with data range 1.
pub fn ssim<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<f64> {
    same_size(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::validation(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    let taps = gaussian_taps();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..3 {
        let x: Vec<f64> = a.data.iter().map(|p| p[k].as_f64()).collect();
        let y: Vec<f64> = b.data.iter().map(|p| p[k].as_f64()).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter(p, w, h, &taps));
        for i in 0..mx.len() {
            let (vx, vy, cov) = (sxx[i] - mx[i] * mx[i], syy[i] - my[i] * my[i], sxy[i] - mx[i] * my[i]);
            total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2))
                / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean squared distance from `samples` area-uniform points on each mesh (both
/// drawn from the same stream of `seed`) to
/// the nearest of the other mesh's points, summed over both directions.
pub fn chamfer_eval<T: Real>(a: &TriMesh<T>, b: &TriMesh<T>, samples: usize, seed: u64) -> Result<T> {
    if a.faces.is_empty() || b.faces.is_empty() {
        return Err(Error::Empty("chamfer evaluation needs two nonempty meshes".into()));
    }
    if samples == 0 {
        return Err(Error::validation("chamfer evaluation needs at least one sample"));
    }
    let pa = a.sample_surface(samples, &mut crate::rng::stream(seed, &[]));
    let pb = b.sample_surface(samples, &mut crate::rng::stream(seed, &[]));
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::Empty("meshes have zero area".into()));
    }
    let one_way = |from: &[crate::geom::Vec3<T>], to: &[crate::geom::Vec3<T>]| {
        let tree = KdTree::new(to);
        let sum: T = from.iter().map(|&p| tree.nearest(p).map_or(T::zero(), |(_, d2)| d2)).sum();
        sum / T::from_usize_lossy(from.len())
    };
    Ok(one_way(&pa, &pb) + one_way(&pb, &pa))
}
