//! Pinhole cameras and rays.
//!
//! Convention: right-handed world, the camera looks down its local +z axis,
//! image x grows right and image y grows down. Pixel coordinates are
//! continuous; integer pixel `(i, j)` covers `[i, i+1) × [j, j+1)` and its
//! center sits at `(i + 0.5, j + 0.5)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vec::{Rigid, Vec2, Vec3};
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    /// World-from-camera rigid transform.
    pub pose: Rigid<T>,
    camera_from_world: Rigid<T>,
}

impl<T: Real> Camera<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
        pose: Rigid<T>,
    ) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::validation("camera focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::validation("camera image size must be nonzero"));
        }
        let (w, h) = (T::from_usize_lossy(width), T::from_usize_lossy(height));
        if !(cx > T::zero() && cx < w && cy > T::zero() && cy < h) {
            return Err(Error::validation("principal point must lie strictly inside the image"));
        }
        if pose.rot.orthonormality_error() > T::lit(1e-6)
            || (pose.rot.det() - T::one()).abs() > T::lit(1e-6)
        {
            return Err(Error::validation("camera pose rotation is not a proper rotation"));
        }
        if !pose.trans.is_finite() {
            return Err(Error::validation("camera pose translation is not finite"));
        }
        Ok(Self { fx, fy, cx, cy, width, height, pose, camera_from_world: pose.inverse() })
    }

    /// Camera at `eye` looking at `target`, principal point at the image center.
    pub fn look_at(
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
        focal: T,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let pose = Rigid::look_at(eye, target, up);
        let cx = T::from_usize_lossy(width) * T::half();
        let cy = T::from_usize_lossy(height) * T::half();
        Self::new(focal, focal, cx, cy, width, height, pose)
    }

    pub fn center(&self) -> Vec3<T> {
        self.pose.trans
    }

    pub fn forward(&self) -> Vec3<T> {
        self.pose.rot.col(2)
    }

    pub fn camera_from_world(&self) -> &Rigid<T> {
        &self.camera_from_world
    }

    pub fn to_camera(&self, x: Vec3<T>) -> Vec3<T> {
        self.camera_from_world.apply(x)
    }

    /// Perspective projection. `depth <= 0` means the point is behind the camera,
    /// in which case the pixel is meaningless.
    #[inline]
    pub fn project(&self, x: Vec3<T>) -> (Vec2<T>, T) {
        let p = self.camera_from_world.apply(x);
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        (Vec2::new(u, v), p.z)
    }

    pub fn in_image(&self, px: Vec2<T>) -> bool {
        px.x >= T::zero()
            && px.y >= T::zero()
            && px.x <= T::from_usize_lossy(self.width)
            && px.y <= T::from_usize_lossy(self.height)
    }

    /// Unit direction (world frame) of the ray through `pixel`, no bounds check.
    pub fn direction(&self, pixel: Vec2<T>) -> Vec3<T> {
        let d = Vec3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, T::one());
        self.pose.apply_vector(d.normalize())
    }

    /// Ray from the camera center through `pixel`, marched over `[t_near, t_far]`.
    pub fn pixel_ray(&self, pixel: Vec2<T>, t_near: T, t_far: T) -> Result<Ray<T>> {
        if !self.in_image(pixel) {
            return Err(Error::Bounds(format!(
                "pixel ({}, {}) outside {}x{} image",
                pixel.x, pixel.y, self.width, self.height
            )));
        }
        Ray::new(self.center(), self.direction(pixel), t_near, t_far)
    }

    /// Center of integer pixel `(i, j)`.
    pub fn pixel_center(i: usize, j: usize) -> Vec2<T> {
        Vec2::new(
            T::from_usize_lossy(i) + T::half(),
            T::from_usize_lossy(j) + T::half(),
        )
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        Camera::new(
            crate::num::cast(self.fx),
            crate::num::cast(self.fy),
            crate::num::cast(self.cx),
            crate::num::cast(self.cy),
            self.width,
            self.height,
            self.pose.cast(),
        )
        .expect("cast of a valid camera")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
    pub t_near: T,
    pub t_far: T,
}

impl<T: Real> Ray<T> {
    /// Normalizes `direction`; requires `0 <= t_near < t_far`.
    pub fn new(origin: Vec3<T>, direction: Vec3<T>, t_near: T, t_far: T) -> Result<Self> {
        let direction = direction
            .try_normalize(T::lit(1e-12))
            .ok_or_else(|| Error::validation("ray direction is zero or not finite"))?;
        if !(t_near >= T::zero() && t_near < t_far) {
            return Err(Error::validation(format!(
                "ray bounds must satisfy 0 <= t_near < t_far (got {t_near}, {t_far})"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::validation("ray origin is not finite"));
        }
        Ok(Self { origin, direction, t_near, t_far })
    }

    #[inline]
    pub fn point_at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }

    pub fn cast<U: Real>(&self) -> Ray<U> {
        Ray {
            origin: self.origin.cast(),
            direction: self.direction.cast(),
            t_near: crate::num::cast(self.t_near),
            t_far: crate::num::cast(self.t_far),
        }
    }

    /// Entry/exit parameters against an axis-aligned box, clipped to `t >= 0`.
    pub fn clip_to_box(origin: Vec3<T>, dir: Vec3<T>, lo: Vec3<T>, hi: Vec3<T>) -> Option<(T, T)> {
        let mut t0 = T::zero();
        let mut t1 = T::infinity();
        for a in 0..3 {
            let inv = T::one() / dir[a];
            let mut ta = (lo[a] - origin[a]) * inv;
            let mut tb = (hi[a] - origin[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN from 0 * inf when the origin lies on a slab plane
            if ta.is_nan() || tb.is_nan() {
                if origin[a] < lo[a] || origin[a] > hi[a] {
                    return None;
                }
                continue;
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t0 < t1).then_some((t0, t1))
    }
}

/// On-disk camera record: `{fx, fy, cx, cy, width, height, pose: [16 row-major]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: Vec<f64>,
}

impl CameraRecord {
    pub fn from_camera<T: Real>(c: &Camera<T>) -> Self {
        Self {
            fx: c.fx.as_f64(),
            fy: c.fy.as_f64(),
            cx: c.cx.as_f64(),
            cy: c.cy.as_f64(),
            width: c.width,
            height: c.height,
            pose: c.pose.to_row_major().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn to_camera<T: Real>(&self) -> Result<Camera<T>> {
        if self.pose.len() != 16 {
            return Err(Error::validation(format!(
                "camera pose must have 16 entries, got {}",
                self.pose.len()
            )));
        }
        let bottom = &self.pose[12..16];
        if bottom.iter().zip([0.0, 0.0, 0.0, 1.0]).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::validation("camera pose bottom row must be (0, 0, 0, 1)"));
        }
        let mut a = [T::zero(); 16];
        for (dst, src) in a.iter_mut().zip(&self.pose) {
            *dst = T::lit(*src);
        }
        Camera::new(
            T::lit(self.fx),
            T::lit(self.fy),
            T::lit(self.cx),
            T::lit(self.cy),
            self.width,
            self.height,
            Rigid::from_row_major(&a),
        )
    }
}

pub fn save_cameras<T: Real>(cameras: &[Camera<T>], path: &Path) -> Result<()> {
    let records: Vec<_> = cameras.iter().map(CameraRecord::from_camera).collect();
    std::fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

pub fn load_cameras<T: Real>(path: &Path) -> Result<Vec<Camera<T>>> {
    let file = Error::open(path)?;
    let records: Vec<CameraRecord> = serde_json::from_reader(std::io::BufReader::new(file))?;
    records.iter().map(CameraRecord::to_camera).collect()
}
