//! Indexed triangle meshes with optional per-vertex attributes.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vec::Vec3;
use crate::error::{Error, Result};
use crate::num::{cast, Real};

/// Garment class of a vertex or pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Upper = 0,
    Lower = 1,
    Fully = 2,
    NonClothing = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Upper, Label::Lower, Label::Fully, Label::NonClothing];

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot<T: Real>(self) -> [T; 4] {
        let mut c = [T::zero(); 4];
        c[self.index()] = T::one();
        c
    }

    /// Argmax with ties going to the lower class index.
    pub fn argmax<T: Real>(conf: &[T; 4]) -> Self {
        let mut best = 0;
        for k in 1..4 {
            if conf[k] > conf[best] {
                best = k;
            }
        }
        Self::ALL[best]
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Upper => "upper",
            Label::Lower => "lower",
            Label::Fully => "fully",
            Label::NonClothing => "non_clothing",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[u32; 3]>,
    pub colors: Option<Vec<[T; 3]>>,
    pub normals: Option<Vec<Vec3<T>>>,
    pub confidence: Option<Vec<[T; 4]>>,
    pub labels: Option<Vec<Label>>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[u32; 3]>) -> Self {
        Self { vertices, faces, ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Checks index bounds, face degeneracy, attribute lengths and confidence sums.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::validation(format!(
                    "face {fi} references vertex {:?} but mesh has {n} vertices",
                    f
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::validation(format!("face {fi} is degenerate: {:?}", f)));
            }
        }
        let check_len = |name: &str, len: Option<usize>| -> Result<()> {
            match len {
                Some(l) if l != n => Err(Error::validation(format!(
                    "{name} has {l} entries for {n} vertices"
                ))),
                _ => Ok(()),
            }
        };
        check_len("colors", self.colors.as_ref().map(Vec::len))?;
        check_len("normals", self.normals.as_ref().map(Vec::len))?;
        check_len("confidence", self.confidence.as_ref().map(Vec::len))?;
        check_len("labels", self.labels.as_ref().map(Vec::len))?;
        if let Some(conf) = &self.confidence {
            for (i, c) in conf.iter().enumerate() {
                let s: T = c.iter().copied().sum();
                if (s - T::one()).abs() > T::lit(1e-6) || c.iter().any(|&v| v < T::zero()) {
                    return Err(Error::validation(format!(
                        "confidence of vertex {i} is not a distribution (sum {s})"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn triangle(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Unnormalized face normal; its length is twice the face area.
    pub fn face_cross(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(c - a)
    }

    pub fn face_area(&self, f: usize) -> T {
        self.face_cross(f).norm() * T::half()
    }

    pub fn surface_area(&self) -> T {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted vertex normals; isolated or degenerate vertices get +z.
    pub fn area_weighted_normals(&self) -> Vec<Vec3<T>> {
        let mut acc = vec![Vec3::zero(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_cross(fi);
            for &v in f {
                acc[v as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize(T::lit(1e-30)).unwrap_or_else(Vec3::unit_z))
            .collect()
    }

    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), &v| {
            (lo.min_elem(v), hi.max_elem(v))
        }))
    }

    /// Undirected edges `(min, max)` mapped to the number of incident faces.
    pub fn edge_face_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::with_capacity(self.faces.len() * 3 / 2);
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Sorted vertex neighbor lists from face edges.
    pub fn vertex_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// True when every edge has exactly two incident faces.
    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_face_counts().values().all(|&c| c == 2)
    }

    /// Median edge length over unique edges.
    pub fn median_edge_length(&self) -> T {
        let mut lengths: Vec<T> = self
            .edge_face_counts()
            .keys()
            .map(|&(a, b)| self.vertices[a as usize].dist(self.vertices[b as usize]))
            .collect();
        if lengths.is_empty() {
            return T::zero();
        }
        lengths.sort_by(|a, b| a.partial_cmp(b).expect("finite edge lengths"));
        lengths[lengths.len() / 2]
    }

    /// Face indices grouped into edge/vertex-connected components, ordered by
    /// their smallest face index.
    pub fn face_components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.faces {
            let r0 = find(&mut parent, f[0] as usize);
            for &v in &f[1..] {
                let r = find(&mut parent, v as usize);
                if r != r0 {
                    let (lo, hi) = (r.min(r0), r.max(r0));
                    parent[hi] = lo;
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_to_group: HashMap<usize, usize> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            let r = find(&mut parent, f[0] as usize);
            let g = *root_to_group.entry(r).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(fi);
        }
        groups
    }

    /// Submesh made of the listed faces, with vertices compactly re-indexed in
    /// order of first appearance and every attribute carried over.
    pub fn submesh(&self, faces: &[usize]) -> TriMesh<T> {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut kept: Vec<u32> = Vec::new();
        let mut new_faces = Vec::with_capacity(faces.len());
        for &fi in faces {
            let f = self.faces[fi];
            let mut nf = [0u32; 3];
            for k in 0..3 {
                nf[k] = *remap.entry(f[k]).or_insert_with(|| {
                    kept.push(f[k]);
                    (kept.len() - 1) as u32
                });
            }
            new_faces.push(nf);
        }
        let pick = |i: &u32| *i as usize;
        TriMesh {
            vertices: kept.iter().map(|i| self.vertices[pick(i)]).collect(),
            faces: new_faces,
            colors: self.colors.as_ref().map(|a| kept.iter().map(|i| a[pick(i)]).collect()),
            normals: self.normals.as_ref().map(|a| kept.iter().map(|i| a[pick(i)]).collect()),
            confidence: self.confidence.as_ref().map(|a| kept.iter().map(|i| a[pick(i)]).collect()),
            labels: self.labels.as_ref().map(|a| kept.iter().map(|i| a[pick(i)]).collect()),
        }
    }

    /// `count` points distributed uniformly by area.
    pub fn sample_surface<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<Vec3<T>> {
        let sampler = AreaSampler::new(self);
        (0..count)
            .filter_map(|_| sampler.sample(rng).map(|s| s.point(self)))
            .collect()
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> TriMesh<T> {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = f(*v);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        let c3 = |a: &[T; 3]| [cast(a[0]), cast(a[1]), cast(a[2])];
        let c4 = |a: &[T; 4]| [cast(a[0]), cast(a[1]), cast(a[2]), cast(a[3])];
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            colors: self.colors.as_ref().map(|a| a.iter().map(c3).collect()),
            normals: self.normals.as_ref().map(|a| a.iter().map(|v| v.cast()).collect()),
            confidence: self.confidence.as_ref().map(|a| a.iter().map(c4).collect()),
            labels: self.labels.clone(),
        }
    }
}

/// A point on a mesh face given by barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample<T> {
    pub face: usize,
    pub bary: [T; 3],
}

impl<T: Real> SurfaceSample<T> {
    pub fn point(&self, mesh: &TriMesh<T>) -> Vec3<T> {
        let [a, b, c] = mesh.triangle(self.face);
        a * self.bary[0] + b * self.bary[1] + c * self.bary[2]
    }
}

/// Draws faces proportionally to their area.
pub struct AreaSampler<T> {
    cdf: Vec<T>,
}

impl<T: Real> AreaSampler<T> {
    pub fn new(mesh: &TriMesh<T>) -> Self {
        let mut acc = T::zero();
        let cdf = (0..mesh.faces.len())
            .map(|f| {
                acc += mesh.face_area(f);
                acc
            })
            .collect();
        Self { cdf }
    }

    pub fn total(&self) -> T {
        self.cdf.last().copied().unwrap_or_else(T::zero)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<SurfaceSample<T>> {
        let total = self.total();
        if !(total > T::zero()) {
            return None;
        }
        let u = T::lit(rng.random::<f64>()) * total;
        let face = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let (mut r1, mut r2) = (T::lit(rng.random::<f64>()), T::lit(rng.random::<f64>()));
        if r1 + r2 > T::one() {
            r1 = T::one() - r1;
            r2 = T::one() - r2;
        }
        Some(SurfaceSample { face, bary: [T::one() - r1 - r2, r1, r2] })
    }
}
