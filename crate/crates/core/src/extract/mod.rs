//! Surface extraction from an occupancy field: marching cubes, vertex
//! normals and vertex colors rendered along reversed normals.

mod march;
mod table;

pub use march::march_grid;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{OccupancyField, RadianceField};
use crate::geom::{GridSpec, TriMesh, Vec3, VoxelGrid};
use crate::num::Real;
use crate::render::{composite_occupancy, density_to_occupancy, stratified_depths};

pub const DEFAULT_ISO: f64 = 0.5;
/// Standoff of the coloring rays, in marching-cube cells.
pub const DEFAULT_STANDOFF_CELLS: f64 = 2.0;
/// Samples along each coloring ray.
pub const COLOR_SAMPLES: usize = 64;

/// Marching cubes of the `occupancy = iso` level set of `field` on `grid`.
pub fn march<T: Real>(field: &impl OccupancyField<T>, grid: GridSpec<T>, iso: T) -> Result<TriMesh<T>> {
    if !(iso > T::zero() && iso < T::one()) {
        return Err(Error::validation("iso level must lie in (0, 1)"));
    }
    let lattice = VoxelGrid::sample(grid, |p| field.occupancy(p));
    Ok(march_grid(&lattice, iso))
}

/// How vertex normals are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalMode {
    /// `-∇o/|∇o|` of the field.
    #[default]
    Gradient,
    /// Area-weighted average of the adjacent face normals.
    Neighbor,
}

/// Mesh with normals set, plus the number of vertices that fell back to
/// face normals.
pub fn compute_normals<T: Real>(
    mesh: &TriMesh<T>,
    field: &impl OccupancyField<T>,
    mode: NormalMode,
) -> (TriMesh<T>, usize) {
    let faces = mesh.area_weighted_normals();
    let fallback_normal = |i: usize| faces[i].try_normalize(T::lit(1e-30)).unwrap_or(Vec3::unit_z());
    let normals: Vec<(Vec3<T>, bool)> = match mode {
        NormalMode::Neighbor => (0..mesh.vertices.len()).map(|i| (fallback_normal(i), true)).collect(),
        NormalMode::Gradient => mesh
            .vertices
            .par_iter()
            .enumerate()
            .map(|(i, &v)| match field.normal_at(v) {
                Some(n) => (n, false),
                None => (fallback_normal(i), true),
            })
            .collect(),
    };
    let fallback = if mode == NormalMode::Gradient { normals.iter().filter(|n| n.1).count() } else { 0 };
    let mut out = mesh.clone();
    out.normals = Some(normals.into_iter().map(|n| n.0).collect());
    (out, fallback)
}

pub fn gradient_normals<T: Real>(mesh: &TriMesh<T>, field: &impl OccupancyField<T>) -> (TriMesh<T>, usize) {
    compute_normals(mesh, field, NormalMode::Gradient)
}

/// Color seen along the ray from `v + standoff·n` towards `-n` over
/// `[0, 2·standoff]`.
pub fn vertex_color<T: Real>(field: &impl RadianceField<T>, v: Vec3<T>, n: Vec3<T>, standoff: T) -> [T; 3] {
    if standoff <= T::zero() {
        return field.color(v, -n);
    }
    let origin = v + n * standoff;
    let far = standoff * T::two();
    let depths = stratified_depths::<T, rand_chacha::ChaCha8Rng>(T::zero(), far, COLOR_SAMPLES, None);
    let step = far / T::from_usize_lossy(COLOR_SAMPLES);
    let samples: Vec<_> = depths.iter().map(|&t| field.sample(origin - n * t, -n)).collect();
    let occ: Vec<T> = match field.mode() {
        crate::field::FieldMode::Occupancy => samples.iter().map(|s| s.value).collect(),
        crate::field::FieldMode::Density => samples.iter().map(|s| density_to_occupancy(s.value, step)).collect(),
    };
    let colors: Vec<[T; 3]> = samples.iter().map(|s| s.color).collect();
    composite_occupancy(&occ, &colors).color
}

/// Colors every vertex by rendering along its reversed normal.
pub fn color_vertices<T: Real>(mesh: &TriMesh<T>, field: &impl RadianceField<T>, standoff: T) -> Result<TriMesh<T>> {
    let normals = mesh.normals.as_ref().ok_or_else(|| Error::validation("vertex coloring needs normals"))?;
    let colors = mesh
        .vertices
        .par_iter()
        .zip(normals.par_iter())
        .map(|(&v, &n)| vertex_color(field, v, n, standoff))
        .collect();
    let mut out = mesh.clone();
    out.colors = Some(colors);
    Ok(out)
}
