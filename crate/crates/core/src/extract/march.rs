//! Marching cubes over a sampled lattice.

use std::collections::HashMap;

use super::table::{table, CORNERS, EDGES};
use crate::geom::{TriMesh, Vec3, VoxelGrid};
use crate::num::Real;

/// Triangulates the `value = iso` level set of `grid`. Lattice points with
/// `value > iso` count as inside; faces are wound counter-clockwise seen from
/// the outside. Vertices shared by neighbouring cells are merged.
pub fn march_grid<T: Real>(grid: &VoxelGrid<T>, iso: T) -> TriMesh<T> {
    let spec = &grid.spec;
    let [nx, ny, nz] = spec.resolution;
    let table = table();
    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    // keyed by (flat index of the edge's lower lattice point, axis)
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |c: usize| {
                    let o = CORNERS[c];
                    (i + o[0], j + o[1], k + o[2])
                };
                let mut mask = 0usize;
                for c in 0..8 {
                    let (a, b, d) = corner(c);
                    if grid.at(a, b, d) > iso {
                        mask |= 1 << c;
                    }
                }
                let tris = &table[mask];
                if tris.is_empty() {
                    continue;
                }
                let mut vertex_of = |e: u8| -> u32 {
                    let (ca, cb, axis) = EDGES[e as usize];
                    let (a, b, d) = corner(ca);
                    let key = (spec.index(a, b, d), axis);
                    *edge_vertex.entry(key).or_insert_with(|| {
                        let (a2, b2, d2) = corner(cb);
                        let (va, vb) = (grid.at(a, b, d), grid.at(a2, b2, d2));
                        let t = ((iso - va) / (vb - va)).max(T::zero()).min(T::one());
                        let (pa, pb) = (spec.point(a, b, d), spec.point(a2, b2, d2));
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    })
                };
                for t in tris {
                    faces.push([vertex_of(t[0]), vertex_of(t[1]), vertex_of(t[2])]);
                }
            }
        }
    }
    TriMesh::new(vertices, faces)
}
