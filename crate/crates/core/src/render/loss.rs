//! Reconstruction and normal-consistency losses (forward evaluation).

use rand::Rng;

use crate::field::OccupancyField;
use crate::geom::Vec3;
use crate::num::Real;

/// Rendered coarse and fine colors of one ray with its target color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayPrediction<T> {
    pub coarse: [T; 3],
    pub fine: [T; 3],
    pub target: [T; 3],
}

pub fn color_distance<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    Vec3::from_array(a).dist(Vec3::from_array(b))
}

/// `Σ_r ‖Ĉ_c(r) - C(r)‖ + ‖Ĉ_f(r) - C(r)‖`.
pub fn loss_rec<T: Real>(batch: &[RayPrediction<T>]) -> T {
    batch
        .iter()
        .map(|p| color_distance(p.coarse, p.target) + color_distance(p.fine, p.target))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalLoss<T> {
    pub value: T,
    /// Points skipped because a normal was undefined there.
    pub skipped: usize,
}

/// `Σ_x ‖n(x) - n(x + εu)‖` with a fresh uniform unit vector `u` per point.
pub fn loss_norm<T: Real>(
    field: &impl OccupancyField<T>,
    points: &[Vec3<T>],
    eps: T,
    rng: &mut impl Rng,
) -> NormalLoss<T> {
    let mut value = T::zero();
    let mut skipped = 0;
    for &x in points {
        let u: Vec3<T> = crate::rng::unit_vector(rng);
        match (field.normal_at(x), field.normal_at(x + u * eps)) {
            (Some(a), Some(b)) => value += a.dist(b),
            _ => skipped += 1,
        }
    }
    NormalLoss { value, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Slab;

    impl OccupancyField<f64> for Slab {
        fn occupancy(&self, x: Vec3<f64>) -> f64 {
            0.5 + 0.3 * x.x - 0.2 * x.y
        }
    }

    struct Ball;

    impl OccupancyField<f64> for Ball {
        fn occupancy(&self, x: Vec3<f64>) -> f64 {
            crate::num::sigmoid((0.3 - x.norm()) * 20.0)
        }
    }

    #[test]
    fn reconstruction_examples() {
        let c = [0.2f64, 0.4, 0.6];
        assert_eq!(loss_rec(&[RayPrediction { coarse: c, fine: c, target: c }]), 0.0);
        let off = RayPrediction { coarse: c, fine: [0.3, 0.4, 0.6], target: c };
        assert!((loss_rec(&[off]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn normal_loss_vanishes_for_planar_fields_and_zero_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<Vec3<f64>> = (0..20).map(|i| Vec3::new(i as f64 * 0.01, 0.1, -0.2)).collect();
        let l = loss_norm(&Slab, &pts, 0.1, &mut rng);
        assert!(l.value < 1e-9 && l.skipped == 0);
        let l = loss_norm(&Ball, &pts, 0.0, &mut rng);
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn normal_loss_matches_reevaluation() {
        let pts = [Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.0, 0.2, 0.22)];
        let l = loss_norm(&Ball, &pts, 0.05, &mut ChaCha8Rng::seed_from_u64(8));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut expected = 0.0;
        for &p in &pts {
            let u: Vec3<f64> = crate::rng::unit_vector(&mut rng);
            let q = p + u * 0.05;
            // analytic normals of a ball are radial
            expected += p.normalize().dist(q.normalize());
        }
        assert!((l.value - expected).abs() < 1e-5, "{} vs {expected}", l.value);
    }
}
