//! Multi-view image features: each registered view contributes a pyramid of
//! mean-downsampled RGB images, sampled bilinearly at the projection of the
//! query point and averaged over the views that see it.

use crate::geom::{Camera, RgbImage, Vec3};
use crate::num::Real;

pub const DEFAULT_LEVELS: usize = 3;

#[derive(Clone, Debug)]
struct View<T> {
    camera: Camera<T>,
    pyramid: Vec<RgbImage<T>>,
    /// 2^-level
    scales: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct FeatureSampler<T> {
    levels: usize,
    views: Vec<View<T>>,
}

impl<T: Real> FeatureSampler<T> {
    pub fn new(levels: usize) -> Self {
        assert!(levels >= 1, "feature pyramid needs at least one level");
        Self { levels, views: Vec::new() }
    }

    /// Builds a sampler from posed images; image sizes must match the cameras.
    pub fn from_views(levels: usize, views: impl IntoIterator<Item = (Camera<T>, RgbImage<T>)>) -> Self {
        let mut s = Self::new(levels);
        for (cam, img) in views {
            s.add_view(cam, img);
        }
        s
    }

    pub fn add_view(&mut self, camera: Camera<T>, image: RgbImage<T>) {
        assert_eq!(
            (image.width, image.height),
            (camera.width, camera.height),
            "image size must match its camera"
        );
        let mut pyramid = vec![image];
        let mut scales = vec![T::one()];
        for _ in 1..self.levels {
            let next = pyramid.last().expect("nonempty").downsample();
            pyramid.push(next);
            scales.push(*scales.last().expect("nonempty") * T::half());
        }
        self.views.push(View { camera, pyramid, scales });
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn feature_dim(&self) -> usize {
        3 * self.levels
    }

    /// Writes the fused feature of `x` into `out[..feature_dim()]`; zero when no view sees `x`.
    pub fn sample_into(&self, x: Vec3<T>, out: &mut [T]) {
        let dim = self.feature_dim();
        let out = &mut out[..dim];
        out.fill(T::zero());
        let mut seen = 0usize;
        for view in &self.views {
            let (px, depth) = view.camera.project(x);
            if !(depth > T::zero()) || !view.camera.in_image(px) {
                continue;
            }
            seen += 1;
            for (l, img) in view.pyramid.iter().enumerate() {
                let s = view.scales[l];
                let c = img.bilinear(crate::geom::Vec2::new(px.x * s, px.y * s));
                for k in 0..3 {
                    out[3 * l + k] += c[k];
                }
            }
        }
        if seen > 0 {
            let inv = T::one() / T::from_usize_lossy(seen);
            for v in out.iter_mut() {
                *v *= inv;
            }
        }
    }

    pub fn sample(&self, x: Vec3<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.feature_dim()];
        self.sample_into(x, &mut out);
        out
    }

    pub fn cameras(&self) -> impl Iterator<Item = &Camera<T>> {
        self.views.iter().map(|v| &v.camera)
    }
}
