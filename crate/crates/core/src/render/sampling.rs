//! Depth sampling along rays: stratified coarse samples and fine samples
//! drawn from the coarse weight distribution.

use rand::Rng;

use super::composite::{composite_occupancy, density_to_occupancy, Composite};
use crate::field::{FieldMode, FieldSample, RadianceField};
use crate::geom::Ray;
use crate::num::Real;

/// Evaluated samples along one ray, ordered by depth.
#[derive(Clone, Debug)]
pub struct RaySamples<T> {
    pub ray: Ray<T>,
    pub depths: Vec<T>,
    /// `t_{j+1} - t_j`, and `t_far - t_N` for the last sample.
    pub deltas: Vec<T>,
    pub samples: Vec<FieldSample<T>>,
    pub mode: FieldMode,
}

impl<T: Real> RaySamples<T> {
    pub fn evaluate(field: &impl RadianceField<T>, ray: Ray<T>, depths: Vec<T>) -> Self {
        let deltas = deltas(&depths, ray.t_far);
        let samples = depths.iter().map(|&t| field.sample(ray.point_at(t), ray.direction)).collect();
        Self { ray, depths, deltas, samples, mode: field.mode() }
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn occupancies(&self) -> Vec<T> {
        match self.mode {
            FieldMode::Occupancy => self.samples.iter().map(|s| s.value).collect(),
            FieldMode::Density => {
                self.samples.iter().zip(&self.deltas).map(|(s, &d)| density_to_occupancy(s.value, d)).collect()
            }
        }
    }

    pub fn colors(&self) -> Vec<[T; 3]> {
        self.samples.iter().map(|s| s.color).collect()
    }

    pub fn composite(&self) -> Composite<T> {
        composite_occupancy(&self.occupancies(), &self.colors())
    }
}

/// Gaps between consecutive depths, closing with `t_far`.
pub fn deltas<T: Real>(depths: &[T], t_far: T) -> Vec<T> {
    let mut out: Vec<T> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&last) = depths.last() {
        out.push(t_far - last);
    }
    out
}

/// One depth per equal-width stratum of `[near, far)`: uniformly jittered
/// inside it when `rng` is given, at its midpoint otherwise.
pub fn stratified_depths<T: Real, R: Rng>(near: T, far: T, n: usize, rng: Option<&mut R>) -> Vec<T> {
    let step = (far - near) / T::from_usize_lossy(n);
    match rng {
        Some(rng) => (0..n)
            .map(|i| near + (T::from_usize_lossy(i) + T::lit(rng.random::<f64>())) * step)
            .collect(),
        None => (0..n).map(|i| near + (T::from_usize_lossy(i) + T::half()) * step).collect(),
    }
}

/// Inverse-CDF sampling of `n` depths from the piecewise-constant density
/// that spreads `weights[j]` uniformly over stratum `j` of `[near, far)`.
/// Falls back to jittered stratified depths when the weights carry no mass.
pub fn importance_depths<T: Real, R: Rng>(near: T, far: T, weights: &[T], n: usize, rng: &mut R) -> Vec<T> {
    let total: T = weights.iter().map(|&w| w.max(T::zero())).sum();
    if !(total > T::lit(1e-12)) {
        return stratified_depths(near, far, n, Some(rng));
    }
    let m = weights.len();
    let step = (far - near) / T::from_usize_lossy(m);
    let mut cdf = Vec::with_capacity(m + 1);
    let mut acc = T::zero();
    cdf.push(acc);
    for &w in weights {
        acc += w.max(T::zero()) / total;
        cdf.push(acc);
    }
    (0..n)
        .map(|i| {
            // stratified in probability space for lower variance
            let u = (T::from_usize_lossy(i) + T::lit(rng.random::<f64>())) / T::from_usize_lossy(n);
            let u = u.min(cdf[m]);
            let j = (cdf.partition_point(|&c| c <= u).max(1) - 1).min(m - 1);
            let mass = cdf[j + 1] - cdf[j];
            let frac = if mass > T::zero() { ((u - cdf[j]) / mass).min(T::one()) } else { T::half() };
            let t = near + (T::from_usize_lossy(j) + frac) * step;
            t.min(far).max(near)
        })
        .collect()
}

/// Which input list a merged depth came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Coarse(usize),
    Fine(usize),
}

/// Sorted union of coarse and fine depths; exact duplicates are dropped so
/// the result is strictly increasing.
pub fn merge_depths<T: Real>(coarse: &[T], fine: &[T]) -> Vec<(T, Source)> {
    let mut all: Vec<(T, Source)> = coarse
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, Source::Coarse(i)))
        .chain(fine.iter().enumerate().map(|(i, &t)| (t, Source::Fine(i))))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite depths"));
    all.dedup_by(|b, a| b.0 == a.0);
    all
}

/// Two-stage sampling of a ray: jittered stratified coarse samples, then
/// `n_fine` extra depths from the coarse weights, merged with the coarse ones.
pub fn sample_ray<T: Real, R: Rng>(
    field: &impl RadianceField<T>,
    ray: Ray<T>,
    n_coarse: usize,
    n_fine: usize,
    rng: &mut R,
) -> (RaySamples<T>, RaySamples<T>) {
    let tc = stratified_depths(ray.t_near, ray.t_far, n_coarse, Some(&mut *rng));
    let coarse = RaySamples::evaluate(field, ray, tc);
    let weights = coarse.composite().weights;
    let tf = importance_depths(ray.t_near, ray.t_far, &weights, n_fine, rng);
    let merged = merge_depths(&coarse.depths, &tf);
    let depths: Vec<T> = merged.iter().map(|m| m.0).collect();
    let deltas = deltas(&depths, ray.t_far);
    let fresh: Vec<FieldSample<T>> = tf.iter().map(|&t| field.sample(ray.point_at(t), ray.direction)).collect();
    let samples = merged
        .iter()
        .map(|(_, s)| match *s {
            Source::Coarse(i) => coarse.samples[i],
            Source::Fine(i) => fresh[i],
        })
        .collect();
    let fine = RaySamples { ray, depths, deltas, samples, mode: field.mode() };
    (coarse, fine)
}
