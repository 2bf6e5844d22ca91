//! Layered reconstruction of dressed people from posed multi-view images.
//!
//! The pipeline learns an occupancy radiance field conditioned on image
//! features ([`field`], [`render`]), extracts a colored mesh ([`extract`]),
//! labels it with fused multi-view garment confidences ([`scgs`]), fits an
//! articulated proxy body inside it ([`bodyfit`]), cleans up garment borders
//! and layer interpenetration, and transfers garments between bodies
//! ([`finishing`]). [`synth`] builds analytic scenes and evaluation metrics.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod bodyfit;
pub mod error;
pub mod extract;
pub mod field;
pub mod finishing;
pub mod geom;
pub mod num;
pub mod render;
pub mod rng;
pub mod scgs;
pub mod synth;

pub use error::{Error, Result};
pub use num::Real;

pub type Vec3d = geom::Vec3<f64>;
pub type Vec3f = geom::Vec3<f32>;
pub type Camera64 = geom::Camera<f64>;
pub type Camera32 = geom::Camera<f32>;
pub type Mesh64 = geom::TriMesh<f64>;
pub type Mesh32 = geom::TriMesh<f32>;
