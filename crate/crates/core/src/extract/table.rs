//! Marching-cubes case table, derived from the cube geometry rather than
//! typed in.
//!
//! For every corner configuration the iso-contour is traced on each cube
//! face (ambiguous faces always separate the inside corners, so neighbouring
//! cubes agree on shared faces), the face segments are chained into closed
//! polygons, each polygon is oriented so its normal points from inside to
//! outside corners, and fanned into triangles.

use std::sync::OnceLock;

/// Corner `c` sits at `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
pub const CORNERS: [[usize; 3]; 8] =
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]];

/// Cube edges as `(lower corner, upper corner, axis)`.
pub const EDGES: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

/// Faces as corner cycles.
const FACES: [[usize; 4]; 6] = [[0, 2, 6, 4], [1, 3, 7, 5], [0, 1, 5, 4], [2, 3, 7, 6], [0, 1, 3, 2], [4, 5, 7, 6]];

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    EDGES.iter().position(|&(x, y, _)| x == lo && y == hi).expect("corners share an edge")
}

fn midpoint(e: usize) -> [f64; 3] {
    let (a, b, _) = EDGES[e];
    let (p, q) = (CORNERS[a], CORNERS[b]);
    [0, 1, 2].map(|k| (p[k] + q[k]) as f64 * 0.5)
}

fn case_triangles(mask: usize) -> Vec<[u8; 3]> {
    let inside = |c: usize| mask >> c & 1 == 1;
    // segments between crossing edges, traced face by face
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for face in FACES {
        let edges: Vec<usize> = (0..4).map(|k| edge_between(face[k], face[(k + 1) % 4])).collect();
        let crossing: Vec<usize> = (0..4).filter(|&k| inside(face[k]) != inside(face[(k + 1) % 4])).collect();
        let mut connect = |a: usize, b: usize| {
            links[a].push(b);
            links[b].push(a);
        };
        match crossing.len() {
            0 => {}
            2 => connect(edges[crossing[0]], edges[crossing[1]]),
            4 => {
                for k in 0..4 {
                    if inside(face[k]) {
                        connect(edges[(k + 3) % 4], edges[k]);
                    }
                }
            }
            _ => unreachable!("a face has an even number of crossings"),
        }
    }
    let mut used = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if used[start] || links[start].is_empty() {
            continue;
        }
        let mut poly = vec![start];
        used[start] = true;
        let mut prev = start;
        let mut cur = links[start][0];
        while cur != start {
            poly.push(cur);
            used[cur] = true;
            let next = if links[cur][0] == prev { links[cur][1] } else { links[cur][0] };
            prev = cur;
            cur = next;
        }
        // outward direction: from the inside corner to the outside corner of each crossed edge
        let mut outward = [0.0; 3];
        for &e in &poly {
            let (a, b, axis) = EDGES[e];
            let _ = b;
            outward[axis] += if inside(a) { 1.0 } else { -1.0 };
        }
        let pts: Vec<[f64; 3]> = poly.iter().map(|&e| midpoint(e)).collect();
        let mut normal = [0.0; 3];
        for i in 0..pts.len() {
            let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
            normal[0] += (p[1] - q[1]) * (p[2] + q[2]);
            normal[1] += (p[2] - q[2]) * (p[0] + q[0]);
            normal[2] += (p[0] - q[0]) * (p[1] + q[1]);
        }
        let dot: f64 = (0..3).map(|k| normal[k] * outward[k]).sum();
        if dot < 0.0 {
            poly.reverse();
        }
        for i in 1..poly.len() - 1 {
            tris.push([poly[0] as u8, poly[i] as u8, poly[i + 1] as u8]);
        }
    }
    tris
}

/// Triangles (as cube edge indices) for each of the 256 corner masks, where
/// bit `c` of the mask is set when corner `c` is inside.
pub fn table() -> &'static [Vec<[u8; 3]>] {
    static TABLE: OnceLock<Vec<Vec<[u8; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(case_triangles).collect())
}
