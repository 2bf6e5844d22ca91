//! Implicit occupancy and color fields.
//!
//! [`OccupancyField`] and [`RadianceField`] are implemented by the learned
//! [`NeuralField`] as well as by analytic scenes, so rendering and surface
//! extraction work with either.

pub mod blob;
pub mod encoding;
pub mod features;
pub mod network;

pub use blob::{load_blob, read_blob, save_blob, write_blob};
pub use encoding::PosEncoding;
pub use features::FeatureSampler;
pub use network::{FieldArch, FieldMode, FieldParams};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::num::Real;

/// Central-difference step for spatial gradients.
pub const GRADIENT_STEP: f64 = 1e-3;

/// Gradient magnitude below which no normal is defined.
pub const NORMAL_EPS: f64 = 1e-9;

/// Path length used to express a density field as an occupancy probability.
pub const DENSITY_REFERENCE_STEP: f64 = 1e-2;

/// One field evaluation. `value` is an occupancy probability for occupancy
/// fields and a volume density for density fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample<T> {
    pub value: T,
    pub color: [T; 3],
}

pub trait OccupancyField<T: Real>: Sync {
    /// Occupancy probability in `[0, 1]`.
    fn occupancy(&self, x: Vec3<T>) -> T;

    /// Spatial gradient of the occupancy by central differences.
    fn occupancy_gradient(&self, x: Vec3<T>) -> Vec3<T> {
        fd_gradient(|p| self.occupancy(p), x, T::lit(GRADIENT_STEP))
    }

    /// Outward unit normal `-∇o/|∇o|`, or `None` where the gradient vanishes.
    fn normal_at(&self, x: Vec3<T>) -> Option<Vec3<T>> {
        let g = self.occupancy_gradient(x);
        let n = g.norm();
        if n > T::lit(NORMAL_EPS) {
            Some(-g / n)
        } else {
            None
        }
    }
}

pub trait RadianceField<T: Real>: OccupancyField<T> {
    fn mode(&self) -> FieldMode {
        FieldMode::Occupancy
    }

    /// Head value and color seen from direction `dir`.
    fn sample(&self, x: Vec3<T>, dir: Vec3<T>) -> FieldSample<T>;

    fn color(&self, x: Vec3<T>, dir: Vec3<T>) -> [T; 3] {
        self.sample(x, dir).color
    }
}

pub fn fd_gradient<T: Real>(f: impl Fn(Vec3<T>) -> T, x: Vec3<T>, h: T) -> Vec3<T> {
    let inv = T::one() / (T::two() * h);
    let e = [Vec3::unit_x(), Vec3::unit_y(), Vec3::unit_z()];
    let g: Vec<T> = e.iter().map(|&e| (f(x + e * h) - f(x - e * h)) * inv).collect();
    Vec3::new(g[0], g[1], g[2])
}

/// The learned field: network parameters plus the image features it is conditioned on.
#[derive(Clone, Copy, Debug)]
pub struct NeuralField<'a, T> {
    pub params: &'a FieldParams<T>,
    pub features: &'a FeatureSampler<T>,
}

impl<'a, T: Real> NeuralField<'a, T> {
    pub fn new(params: &'a FieldParams<T>, features: &'a FeatureSampler<T>) -> Result<Self> {
        if params.arch().feature_dim != features.feature_dim() {
            return Err(Error::validation(format!(
                "network expects {} feature channels, sampler provides {}",
                params.arch().feature_dim,
                features.feature_dim()
            )));
        }
        Ok(Self { params, features })
    }

    /// Writes the network input for `x` (encoding then features) into `tape`.
    pub fn fill_input(&self, x: Vec3<T>, tape: &mut [T]) {
        let input = self.params.input_mut(tape);
        let e = self.params.arch().encoding;
        let n = e.output_dim();
        e.encode_into(x, &mut input[..n]);
        self.features.sample_into(x, &mut input[n..]);
    }

    /// Evaluates at `x`, leaving the activations in `tape` for a reverse pass.
    pub fn eval_tape(&self, x: Vec3<T>, dir: Vec3<T>, tape: &mut [T], with_color: bool) -> (T, Option<[T; 3]>) {
        self.fill_input(x, tape);
        self.params.forward(tape, dir, with_color)
    }

    fn value(&self, x: Vec3<T>) -> T {
        let mut tape = self.params.new_tape();
        self.eval_tape(x, Vec3::unit_z(), &mut tape, false).0
    }
}

impl<T: Real> OccupancyField<T> for NeuralField<'_, T> {
    fn occupancy(&self, x: Vec3<T>) -> T {
        let v = self.value(x);
        match self.params.arch().mode {
            FieldMode::Occupancy => v,
            FieldMode::Density => T::one() - (-v * T::lit(DENSITY_REFERENCE_STEP)).exp(),
        }
    }
}

impl<T: Real> RadianceField<T> for NeuralField<'_, T> {
    fn mode(&self) -> FieldMode {
        self.params.arch().mode
    }

    fn sample(&self, x: Vec3<T>, dir: Vec3<T>) -> FieldSample<T> {
        let mut tape = self.params.new_tape();
        let (value, color) = self.eval_tape(x, dir, &mut tape, true);
        FieldSample { value, color: color.expect("color requested") }
    }
}
