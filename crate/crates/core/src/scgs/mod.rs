//! Lifting per-view class confidence maps onto mesh vertices and cutting
//! garment submeshes out of the labeled mesh.

mod map;

pub use map::{SemanticMap, SUM_TOLERANCE};

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{Camera, KdTree, Label, TriMesh, Vec2};
use crate::num::Real;

/// Visibility depth tolerance in median edge lengths.
pub const DEPTH_TOLERANCE_EDGES: f64 = 1.5;

/// Nearest camera-space depth per pixel; `+∞` where nothing projects.
pub fn depth_buffer<T: Real>(mesh: &TriMesh<T>, camera: &Camera<T>) -> Vec<T> {
    let (w, h) = (camera.width, camera.height);
    let mut zbuf = vec![T::infinity(); w * h];
    let projected: Vec<(Vec2<T>, T)> = mesh.vertices.iter().map(|&v| camera.project(v)).collect();
    for f in &mesh.faces {
        let p = f.map(|i| projected[i as usize]);
        if p.iter().any(|q| !(q.1 > T::lit(1e-9))) {
            continue;
        }
        let (a, b, c) = (p[0].0, p[1].0, p[2].0);
        let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if area.abs() < T::lit(1e-18) {
            continue;
        }
        let lo_x = a.x.min(b.x).min(c.x) - T::half();
        let hi_x = a.x.max(b.x).max(c.x) - T::half();
        let lo_y = a.y.min(b.y).min(c.y) - T::half();
        let hi_y = a.y.max(b.y).max(c.y) - T::half();
        let x0 = lo_x.ceil().max(T::zero()).to_usize().unwrap_or(0);
        let y0 = lo_y.ceil().max(T::zero()).to_usize().unwrap_or(0);
        if hi_x < T::zero() || hi_y < T::zero() {
            continue;
        }
        let x1 = hi_x.floor().to_usize().unwrap_or(0).min(w - 1);
        let y1 = hi_y.floor().to_usize().unwrap_or(0).min(h - 1);
        let inv_z = [T::one() / p[0].1, T::one() / p[1].1, T::one() / p[2].1];
        for y in y0..=y1 {
            for x in x0..=x1 {
                let q = Camera::<T>::pixel_center(x, y);
                let w0 = ((b.x - q.x) * (c.y - q.y) - (b.y - q.y) * (c.x - q.x)) / area;
                let w1 = ((c.x - q.x) * (a.y - q.y) - (c.y - q.y) * (a.x - q.x)) / area;
                let w2 = T::one() - w0 - w1;
                if w0 < T::zero() || w1 < T::zero() || w2 < T::zero() {
                    continue;
                }
                let z = T::one() / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                let slot = &mut zbuf[y * w + x];
                if z < *slot {
                    *slot = z;
                }
            }
        }
    }
    zbuf
}

/// Which vertices each view observes.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityMask {
    pub num_vertices: usize,
    pub num_views: usize,
    /// Vertex-major: `bits[v * num_views + i]`.
    pub bits: Vec<bool>,
}

impl VisibilityMask {
    pub fn get(&self, vertex: usize, view: usize) -> bool {
        self.bits[vertex * self.num_views + view]
    }

    pub fn visible_count(&self, vertex: usize) -> usize {
        self.bits[vertex * self.num_views..(vertex + 1) * self.num_views].iter().filter(|&&b| b).count()
    }
}

/// A vertex is seen by a view when it projects into the image in front of
/// the camera and the mesh's own depth buffer there is no nearer than its
/// depth minus 1.5 median edge lengths.
pub fn visibility<T: Real>(mesh: &TriMesh<T>, cameras: &[Camera<T>]) -> VisibilityMask {
    let tau = mesh.median_edge_length() * T::lit(DEPTH_TOLERANCE_EDGES);
    let per_view: Vec<Vec<bool>> = cameras
        .par_iter()
        .map(|cam| {
            let zbuf = depth_buffer(mesh, cam);
            mesh.vertices
                .iter()
                .map(|&v| {
                    let (px, depth) = cam.project(v);
                    if !(depth > T::zero()) || !cam.in_image(px) {
                        return false;
                    }
                    let x = px.x.floor().to_usize().unwrap_or(0).min(cam.width - 1);
                    let y = px.y.floor().to_usize().unwrap_or(0).min(cam.height - 1);
                    depth - zbuf[y * cam.width + x] <= tau
                })
                .collect()
        })
        .collect();
    let (n, m) = (mesh.vertices.len(), cameras.len());
    let mut bits = vec![false; n * m];
    for (i, view) in per_view.iter().enumerate() {
        for (v, &b) in view.iter().enumerate() {
            bits[v * m + i] = b;
        }
    }
    VisibilityMask { num_vertices: n, num_views: m, bits }
}

/// Labeled mesh plus how many vertices were labeled by propagation.
#[derive(Clone, Debug)]
pub struct Fusion<T> {
    pub mesh: TriMesh<T>,
    pub propagated: usize,
}

/// Per-vertex confidence as the mean of the bilinearly sampled confidences
/// over the views that see the vertex; label by argmax. Vertices seen by no
/// view copy the confidence of the nearest labeled vertex in hops along mesh
/// edges, or in space when their component has no labeled vertex.
pub fn fuse<T: Real>(
    mesh: &TriMesh<T>,
    cameras: &[Camera<T>],
    maps: &[SemanticMap<T>],
    mask: &VisibilityMask,
) -> Result<Fusion<T>> {
    if cameras.len() != maps.len() {
        return Err(Error::validation(format!("{} cameras but {} semantic maps", cameras.len(), maps.len())));
    }
    if mask.num_vertices != mesh.vertices.len() || mask.num_views != cameras.len() {
        return Err(Error::validation("visibility mask does not match the mesh and views"));
    }
    for (cam, map) in cameras.iter().zip(maps) {
        if cam.width != map.width || cam.height != map.height {
            return Err(Error::validation("semantic map size differs from its camera image size"));
        }
    }
    let fused: Vec<Option<[T; 4]>> = mesh
        .vertices
        .par_iter()
        .enumerate()
        .map(|(v, &x)| {
            let mut acc = [T::zero(); 4];
            let mut n = 0usize;
            for (i, (cam, map)) in cameras.iter().zip(maps).enumerate() {
                if !mask.get(v, i) {
                    continue;
                }
                if let Some(c) = map.sample_confidence(cam.project(x).0) {
                    for k in 0..4 {
                        acc[k] += c[k];
                    }
                    n += 1;
                }
            }
            (n > 0).then(|| acc.map(|a| a / T::from_usize_lossy(n)))
        })
        .collect();
    if fused.iter().all(Option::is_none) {
        return Err(Error::Empty("no vertex is visible in any view".into()));
    }
    let propagated = fused.iter().filter(|c| c.is_none()).count();
    let mut conf = fused.clone();
    // multi-source breadth-first search over mesh edges
    let adj = mesh.vertex_adjacency();
    let mut queue: VecDeque<usize> = (0..conf.len()).filter(|&v| conf[v].is_some()).collect();
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            let u = u as usize;
            if conf[u].is_none() {
                conf[u] = conf[v];
                queue.push_back(u);
            }
        }
    }
    if conf.iter().any(Option::is_none) {
        let labeled: Vec<usize> = (0..conf.len()).filter(|&v| conf[v].is_some()).collect();
        let pts: Vec<_> = labeled.iter().map(|&v| mesh.vertices[v]).collect();
        let tree = KdTree::new(&pts);
        for v in 0..conf.len() {
            if conf[v].is_none() {
                let (k, _) = tree.nearest(mesh.vertices[v]).expect("labeled set is nonempty");
                conf[v] = conf[labeled[k]];
            }
        }
    }
    let confidence: Vec<[T; 4]> = conf.into_iter().map(|c| c.expect("every vertex labeled")).collect();
    let mut out = mesh.clone();
    out.labels = Some(confidence.iter().map(Label::argmax).collect());
    out.confidence = Some(confidence);
    Ok(Fusion { mesh: out, propagated })
}

/// Garment submeshes: one per connected component, plus their union.
#[derive(Clone, Debug)]
pub struct GarmentParts<T> {
    pub union: TriMesh<T>,
    pub components: Vec<TriMesh<T>>,
}

/// Faces whose three vertices all carry a label in `classes`.
pub fn extract_garment<T: Real>(mesh: &TriMesh<T>, classes: &[Label]) -> Result<GarmentParts<T>> {
    let labels = mesh.labels.as_ref().ok_or_else(|| Error::validation("garment extraction needs vertex labels"))?;
    let faces: Vec<usize> = (0..mesh.faces.len())
        .filter(|&f| mesh.faces[f].iter().all(|&v| classes.contains(&labels[v as usize])))
        .collect();
    let union = mesh.submesh(&faces);
    let components = union.face_components().iter().map(|c| union.submesh(c)).collect();
    Ok(GarmentParts { union, components })
}
