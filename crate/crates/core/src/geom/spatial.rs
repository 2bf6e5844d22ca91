//! Spatial queries: nearest neighbors over point sets, and closest points and
//! generalized winding numbers over triangle meshes.

use super::mesh::TriMesh;
use super::vec::Vec3;
use crate::num::Real;

/// Static kd-tree over a point set. Queries are exact: the result equals a
/// brute-force scan, with ties broken toward the lowest point index.
#[derive(Clone, Debug)]
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    /// Point indices permuted into implicit median-split order.
    order: Vec<u32>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        build_kd(points, &mut order, 0);
        Self { points: points.to_vec(), order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: Vec3<T>) -> Option<(usize, T)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, T::infinity());
        self.search(q, 0, self.order.len(), 0, &mut best);
        Some(best)
    }

    fn search(&self, q: Vec3<T>, lo: usize, hi: usize, depth: usize, best: &mut (usize, T)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid] as usize;
        let p = self.points[idx];
        let d2 = q.dist_sq(p);
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        if hi - lo == 1 {
            return;
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        // `<=` keeps equal-distance candidates with lower indices reachable
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build_kd<T: Real>(points: &[Vec3<T>], order: &mut [u32], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        let (pa, pb) = (points[a as usize][axis], points[b as usize][axis]);
        pa.partial_cmp(&pb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let (left, right) = order.split_at_mut(mid);
    build_kd(points, left, depth + 1);
    build_kd(points, &mut right[1..], depth + 1);
}

/// Brute-force nearest point with the same tie rule as [`KdTree::nearest`].
pub fn nearest_brute<T: Real>(points: &[Vec3<T>], q: Vec3<T>) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = q.dist_sq(*p);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best
}

const LEAF_SIZE: usize = 8;
/// Far-field acceptance ratio for the dipole approximation.
const WINDING_BETA: f64 = 3.0;

#[derive(Clone, Debug)]
struct Node<T> {
    lo: Vec3<T>,
    hi: Vec3<T>,
    /// Area-weighted centroid.
    center: Vec3<T>,
    radius: T,
    /// Sum of area-weighted normals.
    dipole: Vec3<T>,
    /// Children, or a leaf range in `faces` when `leaf` is set.
    left: usize,
    right: usize,
    leaf: bool,
}

/// Closest point on a mesh surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint<T> {
    pub point: Vec3<T>,
    pub face: usize,
    pub dist_sq: T,
}

/// Bounding-volume tree over the triangles of a mesh.
#[derive(Clone, Debug)]
pub struct TriangleTree<T> {
    tris: Vec<[Vec3<T>; 3]>,
    faces: Vec<u32>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> TriangleTree<T> {
    pub fn new(mesh: &TriMesh<T>) -> Self {
        let tris: Vec<[Vec3<T>; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut faces: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::new();
        if !tris.is_empty() {
            let n = faces.len();
            build_tri(&tris, &mut faces, 0, n, &mut nodes);
        }
        Self { tris, faces, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Generalized winding number: ~1 inside a closed outward-oriented mesh, ~0 outside.
    pub fn winding_number(&self, q: Vec3<T>) -> T {
        if self.nodes.is_empty() {
            return T::zero();
        }
        self.winding_node(0, q) / (T::lit(4.0) * T::PI())
    }

    /// Exact winding number, summing every triangle.
    pub fn winding_number_exact(&self, q: Vec3<T>) -> T {
        let total: T = self.tris.iter().map(|t| solid_angle(t, q)).sum();
        total / (T::lit(4.0) * T::PI())
    }

    pub fn is_inside(&self, q: Vec3<T>) -> bool {
        self.winding_number(q) >= T::half()
    }

    fn winding_node(&self, ni: usize, q: Vec3<T>) -> T {
        let node = &self.nodes[ni];
        let r = node.center - q;
        let d = r.norm();
        if d > T::lit(WINDING_BETA) * node.radius {
            // first-order far field: dipole . r / |r|^3, times 4π cancels below
            return node.dipole.dot(r) / (d * d * d);
        }
        if node.leaf {
            (node.left..node.right)
                .map(|k| solid_angle(&self.tris[self.faces[k] as usize], q))
                .sum()
        } else {
            self.winding_node(node.left, q) + self.winding_node(node.right, q)
        }
    }

    pub fn closest_point(&self, q: Vec3<T>) -> Option<ClosestPoint<T>> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = ClosestPoint { point: q, face: usize::MAX, dist_sq: T::infinity() };
        self.closest_node(0, q, &mut best);
        Some(best)
    }

    fn closest_node(&self, ni: usize, q: Vec3<T>, best: &mut ClosestPoint<T>) {
        let node = &self.nodes[ni];
        if node.leaf {
            for k in node.left..node.right {
                let f = self.faces[k] as usize;
                let p = closest_on_triangle(q, &self.tris[f]);
                let d2 = p.dist_sq(q);
                if d2 < best.dist_sq || (d2 == best.dist_sq && f < best.face) {
                    *best = ClosestPoint { point: p, face: f, dist_sq: d2 };
                }
            }
            return;
        }
        let dl = box_dist_sq(q, &self.nodes[node.left]);
        let dr = box_dist_sq(q, &self.nodes[node.right]);
        let (first, fd, second, sd) = if dl <= dr {
            (node.left, dl, node.right, dr)
        } else {
            (node.right, dr, node.left, dl)
        };
        if fd <= best.dist_sq {
            self.closest_node(first, q, best);
        }
        if sd <= best.dist_sq {
            self.closest_node(second, q, best);
        }
    }
}

fn box_dist_sq<T: Real>(q: Vec3<T>, n: &Node<T>) -> T {
    let mut d = T::zero();
    for a in 0..3 {
        let v = if q[a] < n.lo[a] {
            n.lo[a] - q[a]
        } else if q[a] > n.hi[a] {
            q[a] - n.hi[a]
        } else {
            T::zero()
        };
        d += v * v;
    }
    d
}

fn build_tri<T: Real>(
    tris: &[[Vec3<T>; 3]],
    faces: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let slice = &faces[start..end];
    let mut lo = Vec3::splat(T::infinity());
    let mut hi = Vec3::splat(T::neg_infinity());
    let mut dipole = Vec3::zero();
    let mut weighted = Vec3::zero();
    let mut area_sum = T::zero();
    let mut centroid_sum = Vec3::zero();
    for &f in slice {
        let t = &tris[f as usize];
        for v in t {
            lo = lo.min_elem(*v);
            hi = hi.max_elem(*v);
        }
        let n = (t[1] - t[0]).cross(t[2] - t[0]) * T::half();
        let c = (t[0] + t[1] + t[2]) / T::lit(3.0);
        let a = n.norm();
        dipole += n;
        weighted += c * a;
        area_sum += a;
        centroid_sum += c;
    }
    let center = if area_sum > T::zero() {
        weighted / area_sum
    } else {
        centroid_sum / T::from_usize_lossy(slice.len())
    };
    let radius = slice
        .iter()
        .flat_map(|&f| tris[f as usize].iter())
        .map(|v| v.dist(center))
        .fold(T::zero(), T::max);

    let idx = nodes.len();
    nodes.push(Node { lo, hi, center, radius, dipole, left: start, right: end, leaf: true });
    if end - start <= LEAF_SIZE {
        return idx;
    }
    let ext = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (end - start) / 2;
    let key = |f: u32| {
        let t = &tris[f as usize];
        t[0][axis] + t[1][axis] + t[2][axis]
    };
    faces[start..end].select_nth_unstable_by(mid, |&a, &b| {
        key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let left = build_tri(tris, faces, start, start + mid, nodes);
    let right = build_tri(tris, faces, start + mid, end, nodes);
    let node = &mut nodes[idx];
    node.left = left;
    node.right = right;
    node.leaf = false;
    idx
}

/// Signed solid angle subtended by triangle `t` at `q`.
pub fn solid_angle<T: Real>(t: &[Vec3<T>; 3], q: Vec3<T>) -> T {
    let a = t[0] - q;
    let b = t[1] - q;
    let c = t[2] - q;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    T::two() * det.atan2(den)
}

/// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_on_triangle<T: Real>(p: Vec3<T>, t: &[Vec3<T>; 3]) -> Vec3<T> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= T::zero() && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= T::zero() && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = T::one() / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::mesh::tests::tetrahedron;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// UV sphere with outward faces.
    pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> TriMesh<f64> {
        let mut v = vec![Vec3::new(0.0, radius, 0.0)];
        for r in 1..rings {
            let phi = std::f64::consts::PI * r as f64 / rings as f64;
            for s in 0..segments {
                let th = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
                v.push(Vec3::new(radius * phi.sin() * th.cos(), radius * phi.cos(), radius * phi.sin() * th.sin()));
            }
        }
        v.push(Vec3::new(0.0, -radius, 0.0));
        let bottom = (v.len() - 1) as u32;
        let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
        let mut f = Vec::new();
        for s in 0..segments {
            f.push([0, ring(1, s + 1), ring(1, s)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
                f.push([a, b, d]);
                f.push([a, d, c]);
            }
        }
        for s in 0..segments {
            f.push([bottom, ring(rings - 1, s), ring(rings - 1, s + 1)]);
        }
        TriMesh::new(v, f)
    }

    #[test]
    fn uv_sphere_is_outward_and_closed() {
        let s = uv_sphere(1.0, 12, 24);
        s.validate().unwrap();
        assert!(s.is_closed());
        for fi in 0..s.faces.len() {
            let [a, b, c] = s.triangle(fi);
            assert!(s.face_cross(fi).dot(a + b + c) > 0.0);
        }
    }

    #[test]
    fn kdtree_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1usize, 2, 7, 100, 333] {
            // coarse grid coordinates force many exact ties
            let pts: Vec<Vec3<f64>> = (0..n)
                .map(|_| Vec3::new(rng.random_range(0..5) as f64, rng.random_range(0..5) as f64, rng.random_range(0..5) as f64))
                .collect();
            let tree = KdTree::new(&pts);
            for _ in 0..200 {
                let q = Vec3::new(rng.random_range(-1.0..6.0), rng.random_range(-1.0..6.0), (rng.random_range(0..5) as f64) + 0.5);
                assert_eq!(tree.nearest(q), nearest_brute(&pts, q));
                let qi = pts[rng.random_range(0..n)];
                assert_eq!(tree.nearest(qi), nearest_brute(&pts, qi));
            }
        }
    }

    #[test]
    fn winding_number_inside_outside() {
        let t = TriangleTree::new(&tetrahedron());
        assert!((t.winding_number(Vec3::splat(0.1)) - 1.0).abs() < 1e-9);
        assert!(t.winding_number(Vec3::splat(2.0)).abs() < 1e-9);
    }

    #[test]
    fn fast_winding_matches_exact() {
        let s = uv_sphere(1.0, 24, 48);
        let tree = TriangleTree::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let q = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let fast = tree.winding_number(q);
            let exact = tree.winding_number_exact(q);
            assert!((fast - exact).abs() < 0.02, "q={q:?} fast={fast} exact={exact}");
            let r = q.norm();
            if (r - 1.0).abs() > 0.05 {
                assert_eq!(fast >= 0.5, r < 1.0);
            }
        }
    }

    #[test]
    fn closest_point_matches_brute_force() {
        let s = uv_sphere(1.0, 10, 20);
        let tree = TriangleTree::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let q = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let cp = tree.closest_point(q).unwrap();
            let brute = (0..s.faces.len())
                .map(|f| closest_on_triangle(q, &s.triangle(f)).dist_sq(q))
                .fold(f64::INFINITY, f64::min);
            assert!((cp.dist_sq - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn closest_on_triangle_regions() {
        let t = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert_eq!(closest_on_triangle(Vec3::new(-1.0, -1.0, 0.0), &t), t[0]);
        assert!(closest_on_triangle(Vec3::new(0.2, 0.2, 3.0), &t).dist(Vec3::new(0.2, 0.2, 0.0)) < 1e-15);
        assert_eq!(closest_on_triangle(Vec3::new(0.5, -2.0, 0.0), &t), Vec3::new(0.5, 0.0, 0.0));
    }
}
