//! Pushing garment vertices out of the body.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{TriMesh, TriangleTree, Vec3};
use crate::num::Real;

pub const DEFAULT_MARGIN: f64 = 0.005;
pub const MAX_PASSES: usize = 10;

/// Relative slack on the margin test, so a vertex placed exactly at the
/// margin is not flagged again by rounding.
const MARGIN_SLACK: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DepenetrateReport {
    /// Passes that moved at least one vertex.
    pub passes: usize,
    /// Vertex moves over all passes.
    pub moves: usize,
    /// Vertices still inside the body at the end.
    pub inside: usize,
    /// Vertices outside but still closer than the margin at the end.
    pub close: usize,
}

impl DepenetrateReport {
    pub fn converged(&self) -> bool {
        self.inside == 0 && self.close == 0
    }
}

/// The body surface and its face normals.
pub struct BodySurface<T> {
    tree: TriangleTree<T>,
    normals: Vec<Vec3<T>>,
}

impl<T: Real> BodySurface<T> {
    /// Fails unless the body is a closed mesh.
    pub fn new(body: &TriMesh<T>) -> Result<Self> {
        body.validate()?;
        if !body.is_closed() {
            return Err(Error::validation("body mesh must be closed"));
        }
        let normals = (0..body.faces.len())
            .map(|f| body.face_cross(f).try_normalize(T::lit(1e-30)).unwrap_or_else(Vec3::unit_z))
            .collect();
        Ok(Self { tree: TriangleTree::new(body), normals })
    }

    pub fn is_inside(&self, p: Vec3<T>) -> bool {
        self.tree.is_inside(p)
    }

    /// Where `p` should go, or `None` when it is outside with enough clearance.
    pub fn correction(&self, p: Vec3<T>, margin: T) -> Option<Vec3<T>> {
        let cp = self.tree.closest_point(p)?;
        let limit = margin * (T::one() - T::lit(MARGIN_SLACK));
        if cp.dist_sq >= limit * limit && !self.tree.is_inside(p) {
            return None;
        }
        Some(cp.point + self.normals[cp.face] * margin)
    }

    pub fn count_violations(&self, points: &[Vec3<T>], margin: T) -> (usize, usize) {
        let limit = margin * (T::one() - T::lit(MARGIN_SLACK));
        points
            .par_iter()
            .map(|&p| {
                if self.tree.is_inside(p) {
                    (1, 0)
                } else if self.tree.closest_point(p).is_some_and(|cp| cp.dist_sq < limit * limit) {
                    (0, 1)
                } else {
                    (0, 0)
                }
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    }
}

/// Moves every garment vertex that is inside the body, or nearer to it than
/// `margin`, to the nearest body point plus `margin` along that face's
/// normal; repeats up to [`MAX_PASSES`] times. Returns the best effort with
/// the remaining violations when it does not converge.
pub fn depenetrate<T: Real>(garment: &TriMesh<T>, body: &TriMesh<T>, margin: T) -> Result<(TriMesh<T>, DepenetrateReport)> {
    if !(margin >= T::zero()) {
        return Err(Error::validation("margin must be non-negative"));
    }
    garment.validate()?;
    let surface = BodySurface::new(body)?;
    let mut out = garment.clone();
    let mut report = DepenetrateReport::default();
    for _ in 0..MAX_PASSES {
        let moved: Vec<(usize, Vec3<T>)> = out
            .vertices
            .par_iter()
            .enumerate()
            .filter_map(|(i, &p)| surface.correction(p, margin).map(|q| (i, q)))
            .collect();
        if moved.is_empty() {
            break;
        }
        report.passes += 1;
        report.moves += moved.len();
        for (i, q) in moved {
            out.vertices[i] = q;
        }
    }
    if report.moves > 0 {
        out.normals = None;
    }
    (report.inside, report.close) = surface.count_violations(&out.vertices, margin);
    Ok((out, report))
}
