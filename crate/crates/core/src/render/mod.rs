//! Volume rendering of radiance fields: compositing, two-stage ray
//! sampling, the training losses and the optimization loop.

pub mod composite;
pub mod loss;
pub mod sampling;
pub mod train;

pub use composite::{
    composite_occupancy, composite_occupancy_backward, composite_transmittance, density_to_occupancy, Composite,
};
pub use loss::{loss_norm, loss_rec, NormalLoss, RayPrediction};
pub use sampling::{importance_depths, merge_depths, sample_ray, stratified_depths, RaySamples};
pub use train::{train, FixedRay, LossRecord, TrainConfig, TrainLog, TrainScene};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::RadianceField;
use crate::geom::{Camera, Ray, RgbImage, Vec2, Vec3};
use crate::num::Real;
use crate::rng::stream;

/// A camera ray with the color observed along it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRay<T> {
    pub ray: Ray<T>,
    pub color: [T; 3],
}

/// The ray through `pixel`, limited to where it crosses `[-h, h]³`.
pub fn bounded_ray<T: Real>(cam: &Camera<T>, pixel: Vec2<T>, half_extent: T) -> Option<Ray<T>> {
    let origin = cam.center();
    let dir = cam.direction(pixel);
    let (t0, t1) = Ray::clip_to_box(origin, dir, Vec3::splat(-half_extent), Vec3::splat(half_extent))?;
    Ray::new(origin, dir, t0, t1).ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Scene bounds `[-h, h]³`; rays missing them render as background.
    pub half_extent: f64,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { n_coarse: 32, n_fine: 32, half_extent: 0.5, background: [0.0; 3], seed: 0 }
    }
}

/// Color of one ray after two-stage sampling, over the configured background.
pub fn render_ray<T: Real>(field: &impl RadianceField<T>, ray: Ray<T>, cfg: &RenderConfig, rng: &mut impl rand::Rng) -> [T; 3] {
    let (_, fine) = sample_ray(field, ray, cfg.n_coarse, cfg.n_fine.max(1), rng);
    let c = fine.composite();
    let rest = T::one() - c.opacity;
    let bg = cfg.background.map(T::lit);
    [c.color[0] + rest * bg[0], c.color[1] + rest * bg[1], c.color[2] + rest * bg[2]]
}

/// Renders every pixel of `cam`, in parallel; each pixel has its own random stream.
pub fn render_image<T: Real>(field: &impl RadianceField<T>, cam: &Camera<T>, cfg: &RenderConfig) -> RgbImage<T> {
    let h = T::lit(cfg.half_extent);
    let bg = cfg.background.map(T::lit);
    let rows: Vec<Vec<[T; 3]>> = (0..cam.height)
        .into_par_iter()
        .map(|y| {
            (0..cam.width)
                .map(|x| match bounded_ray(cam, Camera::<T>::pixel_center(x, y), h) {
                    Some(ray) => {
                        let mut rng = stream(cfg.seed, &[y as u64, x as u64]);
                        render_ray(field, ray, cfg, &mut rng)
                    }
                    None => bg,
                })
                .collect()
        })
        .collect();
    RgbImage { width: cam.width, height: cam.height, data: rows.into_iter().flatten().collect() }
}
