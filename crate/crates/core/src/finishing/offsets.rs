//! Garment vertices recorded as offsets from their nearest body vertices, and
//! transfer of a garment onto another body with the same tessellation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, Mat3, TriMesh, Vec3};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Offset<T> {
    /// Body vertex index.
    pub u: usize,
    /// Garment vertex minus body vertex.
    pub offset: Vec3<T>,
}

#[derive(Serialize, Deserialize)]
struct OffsetRecord {
    u: usize,
    offset: [f64; 3],
}

/// One offset per garment vertex, in garment vertex order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OffsetMap<T> {
    pub entries: Vec<Offset<T>>,
}

impl<T: Real> OffsetMap<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSON array of `{"u": index, "offset": [x, y, z]}`.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<OffsetRecord> =
            self.entries.iter().map(|e| OffsetRecord { u: e.u, offset: e.offset.cast::<f64>().to_array() }).collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<OffsetRecord> = serde_json::from_str(text)?;
        let entries = records
            .into_iter()
            .map(|r| Offset { u: r.u, offset: Vec3::from_array(r.offset).cast() })
            .collect();
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::io::read_to_string(Error::open(path)?)?;
        Self::from_json(&text)
    }
}

/// Nearest body vertex (lowest index on ties) and offset for every garment vertex.
pub fn register_offsets<T: Real>(garment: &TriMesh<T>, body: &TriMesh<T>) -> Result<OffsetMap<T>> {
    if garment.vertices.is_empty() || body.vertices.is_empty() {
        return Err(Error::Empty("registration needs a nonempty garment and body".into()));
    }
    let tree = KdTree::new(&body.vertices);
    let entries = garment
        .vertices
        .par_iter()
        .map(|&v| {
            let (u, _) = tree.nearest(v).expect("body has vertices");
            Offset { u, offset: v - body.vertices[u] }
        })
        .collect();
    Ok(OffsetMap { entries })
}

/// How offsets are carried to the new body.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// Rotate each offset with its body vertex's normal/tangent frame.
    #[default]
    LocalFrame,
    /// Add the stored offsets unchanged.
    Raw,
}

/// Per-vertex orthonormal frames `[tangent, bitangent, normal]` (columns).
/// The tangent points toward the lowest-index neighbor, projected off the normal.
pub fn vertex_frames<T: Real>(mesh: &TriMesh<T>) -> Vec<Mat3<T>> {
    let normals = mesh.area_weighted_normals();
    let adjacency = mesh.vertex_adjacency();
    (0..mesh.vertices.len())
        .map(|i| {
            let n = normals[i];
            let toward = adjacency[i].first().map(|&j| mesh.vertices[j as usize] - mesh.vertices[i]);
            let t = toward
                .and_then(|d| (d - n * n.dot(d)).try_normalize(T::lit(1e-20)))
                .unwrap_or_else(|| n.any_orthogonal().normalize());
            Mat3::from_cols(t, n.cross(t), n)
        })
        .collect()
}

/// Places every garment vertex at its body vertex on `new_body` plus its
/// offset (rotated from `old_body`'s frame to `new_body`'s in
/// [`OffsetMode::LocalFrame`]). Faces and per-vertex attributes other than
/// normals are copied from `garment`.
pub fn retarget<T: Real>(
    offsets: &OffsetMap<T>,
    garment: &TriMesh<T>,
    old_body: &TriMesh<T>,
    new_body: &TriMesh<T>,
    mode: OffsetMode,
) -> Result<TriMesh<T>> {
    if offsets.len() != garment.vertices.len() {
        return Err(Error::validation(format!(
            "{} offsets for a garment with {} vertices",
            offsets.len(),
            garment.vertices.len()
        )));
    }
    if old_body.vertices.len() != new_body.vertices.len() || old_body.faces != new_body.faces {
        return Err(Error::validation("bodies must share one tessellation"));
    }
    if let Some(e) = offsets.entries.iter().find(|e| e.u >= new_body.vertices.len()) {
        return Err(Error::Bounds(format!("body vertex {} of {}", e.u, new_body.vertices.len())));
    }
    let rotations: Option<Vec<Mat3<T>>> = match mode {
        OffsetMode::Raw => None,
        OffsetMode::LocalFrame => {
            let (a, b) = (vertex_frames(old_body), vertex_frames(new_body));
            Some(a.iter().zip(&b).map(|(fa, fb)| fb.mul_mat(&fa.transpose())).collect())
        }
    };
    let mut out = garment.clone();
    out.normals = None;
    out.vertices = offsets
        .entries
        .iter()
        .map(|e| {
            let d = match &rotations {
                Some(r) => r[e.u].mul_vec(e.offset),
                None => e.offset,
            };
            new_body.vertices[e.u] + d
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::spatial::nearest_brute;
    use crate::geom::spatial::tests::uv_sphere;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coincident_vertex_has_zero_offset() {
        let body = uv_sphere(1.0, 6, 8);
        let garment = TriMesh::new(vec![body.vertices[7], Vec3::splat(2.0), Vec3::splat(3.0)], vec![[0, 1, 2]]);
        let map = register_offsets(&garment, &body).unwrap();
        assert_eq!(map.entries[0], Offset { u: 7, offset: Vec3::zero() });
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec3<f64>> {
            (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
        };
        for _ in 0..20 {
            let body = TriMesh::new(pts(150, &mut rng), vec![[0, 1, 2]]);
            let garment = TriMesh::new(pts(80, &mut rng), vec![[0, 1, 2]]);
            let map = register_offsets(&garment, &body).unwrap();
            for (v, e) in garment.vertices.iter().zip(&map.entries) {
                assert_eq!(e.u, nearest_brute(&body.vertices, *v).unwrap().0);
                assert_eq!(body.vertices[e.u] + e.offset, *v);
            }
        }
    }

    #[test]
    fn shell_offsets_have_equal_norm() {
        let body = uv_sphere(1.0, 12, 16);
        let garment = body.map_vertices(|v| v * 1.05);
        let map = register_offsets(&garment, &body).unwrap();
        for e in &map.entries {
            assert!((e.offset.norm() - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_retarget_reproduces_the_garment() {
        let body = uv_sphere(1.0, 12, 16);
        let garment = uv_sphere(1.1, 5, 7);
        let map = register_offsets(&garment, &body).unwrap();
        for mode in [OffsetMode::LocalFrame, OffsetMode::Raw] {
            let out = retarget(&map, &garment, &body, &body, mode).unwrap();
            assert_eq!(out.faces, garment.faces);
            for (a, b) in out.vertices.iter().zip(&garment.vertices) {
                assert!(a.dist(*b) < 1e-12);
            }
        }
    }

    #[test]
    fn rigid_rotation_is_followed_and_undone() {
        let body = uv_sphere(1.0, 12, 16);
        let garment = uv_sphere(1.1, 5, 7);
        let rot = Mat3::from_axis_angle(Vec3::new(0.3, -0.5, 0.2));
        let turned = body.map_vertices(|v| rot.mul_vec(v));
        let map = register_offsets(&garment, &body).unwrap();
        let out = retarget(&map, &garment, &body, &turned, OffsetMode::LocalFrame).unwrap();
        for (a, b) in out.vertices.iter().zip(&garment.vertices) {
            assert!(a.dist(rot.mul_vec(*b)) < 1e-9);
        }
        let back_map = register_offsets(&out, &turned).unwrap();
        let back = retarget(&back_map, &out, &turned, &body, OffsetMode::LocalFrame).unwrap();
        for (a, b) in back.vertices.iter().zip(&garment.vertices) {
            assert!(a.dist(*b) < 1e-9);
        }
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let body = uv_sphere(1.0, 6, 8);
        let garment = uv_sphere(1.1, 4, 5);
        let mut map = register_offsets(&garment, &body).unwrap();
        assert!(retarget(&map, &garment, &body, &uv_sphere(1.0, 7, 8), OffsetMode::Raw).is_err());
        map.entries[0].u = 999;
        assert!(matches!(retarget(&map, &garment, &body, &body, OffsetMode::Raw), Err(Error::Bounds(_))));
        map.entries.pop();
        assert!(retarget(&map, &garment, &body, &body, OffsetMode::Raw).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let body = uv_sphere(1.0, 6, 8);
        let map = register_offsets(&uv_sphere(1.1, 4, 5), &body).unwrap();
        let text = map.to_json().unwrap();
        assert!(text.contains("\"u\"") && text.contains("\"offset\""));
        assert_eq!(OffsetMap::<f64>::from_json(&text).unwrap(), map);
    }

    proptest! {
        #[test]
        fn frames_are_orthonormal(scale in 0.5f64..2.0, squash in 0.5f64..1.5) {
            let body = uv_sphere(scale, 8, 10).map_vertices(|v| Vec3::new(v.x, v.y * squash, v.z));
            for f in vertex_frames(&body) {
                prop_assert!(f.orthonormality_error() < 1e-9);
                prop_assert!((f.det() - 1.0).abs() < 1e-9);
            }
        }
    }
}
