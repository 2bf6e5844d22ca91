//! Regular sampling lattices.

use rayon::prelude::*;

use super::vec::Vec3;
use crate::error::{Error, Result};
use crate::num::Real;

/// Lattice geometry without values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    /// Lattice points per axis.
    pub resolution: [usize; 3],
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> GridSpec<T> {
    pub fn new(resolution: [usize; 3], min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::validation("grid resolution must be at least 2 per axis"));
        }
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(Error::validation("grid bounds must satisfy min < max on every axis"));
        }
        Ok(Self { resolution, min, max })
    }

    /// Cube `[-half, half]³` with `res` points per axis.
    pub fn cube(res: usize, half: T) -> Result<Self> {
        Self::new([res; 3], Vec3::splat(-half), Vec3::splat(half))
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> Vec3<T> {
        let d = self.max - self.min;
        Vec3::new(
            d.x / T::from_usize_lossy(self.resolution[0] - 1),
            d.y / T::from_usize_lossy(self.resolution[1] - 1),
            d.z / T::from_usize_lossy(self.resolution[2] - 1),
        )
    }

    /// Flat index with x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution[1] + j) * self.resolution[0] + i
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3<T> {
        let c = self.cell_size();
        Vec3::new(
            self.min.x + c.x * T::from_usize_lossy(i),
            self.min.y + c.y * T::from_usize_lossy(j),
            self.min.z + c.z * T::from_usize_lossy(k),
        )
    }

    pub fn point_of_index(&self, idx: usize) -> Vec3<T> {
        let i = idx % self.resolution[0];
        let j = (idx / self.resolution[0]) % self.resolution[1];
        let k = idx / (self.resolution[0] * self.resolution[1]);
        self.point(i, j, k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T> {
    pub spec: GridSpec<T>,
    pub values: Vec<T>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn from_values(spec: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::validation(format!(
                "grid has {} values for {} lattice points",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Evaluates `f` at every lattice point, in parallel.
    pub fn sample(spec: GridSpec<T>, f: impl Fn(Vec3<T>) -> T + Sync) -> Self {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| f(spec.point_of_index(idx)))
            .collect();
        Self { spec, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> T {
        self.values[self.spec.index(i, j, k)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_geometry() {
        let spec = GridSpec::cube(3, 1.0f64).unwrap();
        assert_eq!(spec.len(), 27);
        assert_eq!(spec.point(0, 0, 0), Vec3::splat(-1.0));
        assert_eq!(spec.point(2, 1, 0), Vec3::new(1.0, 0.0, -1.0));
        assert_eq!(spec.point_of_index(spec.index(2, 1, 0)), spec.point(2, 1, 0));
        let g = VoxelGrid::sample(spec, |p| p.x + 10.0 * p.y);
        assert_eq!(g.at(2, 2, 1), 11.0);
    }

    #[test]
    fn invalid_grids() {
        assert!(GridSpec::cube(1, 1.0f64).is_err());
        assert!(GridSpec::new([2, 2, 2], Vec3::splat(1.0f64), Vec3::splat(0.0)).is_err());
        let spec = GridSpec::cube(2, 1.0f64).unwrap();
        assert!(VoxelGrid::from_values(spec, vec![0.0; 7]).is_err());
    }
}
