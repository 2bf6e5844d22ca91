//! Capsules: segments swept by a ball.

use super::vec::{Rigid, Vec3};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule<T> {
    pub a: Vec3<T>,
    pub b: Vec3<T>,
    pub radius: T,
}

impl<T: Real> Capsule<T> {
    pub fn new(a: Vec3<T>, b: Vec3<T>, radius: T) -> Self {
        Self { a, b, radius }
    }

    /// Parameter in `[0, 1]` of the axis point closest to `p`.
    pub fn axis_param(&self, p: Vec3<T>) -> T {
        let ab = self.b - self.a;
        let len2 = ab.norm_sq();
        if len2 <= T::zero() {
            return T::zero();
        }
        ((p - self.a).dot(ab) / len2).max(T::zero()).min(T::one())
    }

    pub fn axis_point(&self, t: T) -> Vec3<T> {
        self.a.lerp(self.b, t)
    }

    /// Signed distance, negative inside.
    pub fn distance(&self, p: Vec3<T>) -> T {
        p.dist(self.axis_point(self.axis_param(p))) - self.radius
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        self.distance(p) < T::zero()
    }

    /// Outward surface normal at (or near) `p`.
    pub fn normal(&self, p: Vec3<T>) -> Vec3<T> {
        let d = p - self.axis_point(self.axis_param(p));
        d.try_normalize(T::lit(1e-12)).unwrap_or_else(|| (self.b - self.a).any_orthogonal().normalize())
    }

    pub fn inflate(&self, by: T) -> Self {
        Self { radius: self.radius + by, ..*self }
    }

    pub fn transform(&self, t: &Rigid<T>) -> Self {
        Self { a: t.apply(self.a), b: t.apply(self.b), radius: self.radius }
    }

    /// Smallest positive ray parameter where `origin + t·dir` meets the surface.
    pub fn intersect(&self, origin: Vec3<T>, dir: Vec3<T>) -> Option<T> {
        let mut best: Option<T> = None;
        let mut consider = |t: T| {
            if t > T::zero() && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        };
        let ab = self.b - self.a;
        let len = ab.norm();
        let r2 = self.radius * self.radius;
        if len > T::lit(1e-12) {
            let u = ab / len;
            let w = origin - self.a;
            let dp = dir - u * dir.dot(u);
            let wp = w - u * w.dot(u);
            let qa = dp.norm_sq();
            if qa > T::lit(1e-18) {
                let qb = T::two() * wp.dot(dp);
                let qc = wp.norm_sq() - r2;
                let disc = qb * qb - T::lit(4.0) * qa * qc;
                if disc >= T::zero() {
                    let sq = disc.sqrt();
                    for t in [(-qb - sq) / (T::two() * qa), (-qb + sq) / (T::two() * qa)] {
                        let s = (w + dir * t).dot(u);
                        if s >= T::zero() && s <= len {
                            consider(t);
                        }
                    }
                }
            }
        }
        for c in [self.a, self.b] {
            let w = origin - c;
            let qa = dir.norm_sq();
            let qb = T::two() * w.dot(dir);
            let qc = w.norm_sq() - r2;
            let disc = qb * qb - T::lit(4.0) * qa * qc;
            if disc >= T::zero() {
                let sq = disc.sqrt();
                consider((-qb - sq) / (T::two() * qa));
                consider((-qb + sq) / (T::two() * qa));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_and_normal() {
        let c = Capsule::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 0.5f64);
        assert!((c.distance(Vec3::new(0.5, 1.0, 0.0)) - 0.5).abs() < 1e-12);
        assert!((c.distance(Vec3::new(-1.0, 0.0, 0.0)) - 0.5).abs() < 1e-12);
        assert!(c.contains(Vec3::new(1.2, 0.1, 0.0)));
        assert!((c.normal(Vec3::new(0.3, 0.0, -2.0)) - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_hits_match_marching() {
        let c = Capsule::new(Vec3::new(-0.2, 0.1, 0.0), Vec3::new(0.3, -0.1, 0.2), 0.15f64);
        let mut rng = crate::rng::stream(3, &[]);
        for _ in 0..200 {
            let origin: Vec3<f64> = crate::rng::unit_vector::<f64>(&mut rng) * 2.0;
            let target = Vec3::new(0.05, 0.0, 0.1) + crate::rng::unit_vector::<f64>(&mut rng) * 0.25;
            let dir = (target - origin).normalize();
            // march in small steps for an independent first hit
            let mut marched = None;
            let mut t = 0.0;
            while t < 4.0 {
                if c.contains(origin + dir * t) {
                    marched = Some(t);
                    break;
                }
                t += 1e-4;
            }
            match (c.intersect(origin, dir), marched) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 2e-4, "{a} vs {b}"),
                (None, None) => {}
                // grazing rays may disagree within the step size
                (Some(a), None) => assert!(c.distance(origin + dir * a).abs() < 1e-9),
                (None, Some(_)) => panic!("missed hit"),
            }
        }
    }
}
