//! Border edges and loops of open meshes, and midpoint smoothing of the loops.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::TriMesh;
use crate::num::Real;

/// Border edges (incident to exactly one face) and the loops they form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Borders {
    /// Sorted `(min, max)` vertex pairs.
    pub edges: Vec<[u32; 2]>,
    /// Closed vertex cycles; the last vertex connects back to the first.
    pub loops: Vec<Vec<u32>>,
}

impl Borders {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Number of border edges at each vertex that has any.
    pub fn degrees(&self) -> BTreeMap<u32, usize> {
        let mut deg = BTreeMap::new();
        for e in &self.edges {
            *deg.entry(e[0]).or_insert(0) += 1;
            *deg.entry(e[1]).or_insert(0) += 1;
        }
        deg
    }

    /// Total length of all border edges at the given positions.
    pub fn total_length<T: Real>(&self, mesh: &TriMesh<T>) -> T {
        self.edges
            .iter()
            .map(|e| mesh.vertices[e[0] as usize].dist(mesh.vertices[e[1] as usize]))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Counts face incidences per edge. Fails on edges shared by three or more
/// faces.
pub fn detect_borders<T: Real>(mesh: &TriMesh<T>) -> Result<Borders> {
    mesh.validate()?;
    let counts: BTreeMap<(u32, u32), usize> = mesh.edge_face_counts().into_iter().collect();
    let bad: Vec<String> =
        counts.iter().filter(|(_, &c)| c > 2).map(|((a, b), c)| format!("({a},{b})x{c}")).collect();
    if !bad.is_empty() {
        let shown = bad.iter().take(10).cloned().collect::<Vec<_>>().join(" ");
        return Err(Error::validation(format!("{} non-manifold edges: {shown}", bad.len())));
    }
    let edges: Vec<[u32; 2]> = counts.iter().filter(|(_, &c)| c == 1).map(|(&(a, b), _)| [a, b]).collect();
    let loops = assemble_loops(&edges);
    Ok(Borders { edges, loops })
}

/// Walks unused edges, always taking the lowest-index unused neighbor, until
/// the walk returns to its start.
fn assemble_loops(edges: &[[u32; 2]]) -> Vec<Vec<u32>> {
    let mut incident: BTreeMap<u32, Vec<(u32, usize)>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        incident.entry(e[0]).or_default().push((e[1], i));
        incident.entry(e[1]).or_default().push((e[0], i));
    }
    for list in incident.values_mut() {
        list.sort_unstable();
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start_edge in 0..edges.len() {
        if used[start_edge] {
            continue;
        }
        used[start_edge] = true;
        let start = edges[start_edge][0];
        let mut cycle = vec![start];
        let mut at = edges[start_edge][1];
        while at != start {
            cycle.push(at);
            let next = incident[&at].iter().find(|&&(_, e)| !used[e]).copied();
            match next {
                Some((v, e)) => {
                    used[e] = true;
                    at = v;
                }
                None => break,
            }
        }
        loops.push(cycle);
    }
    loops
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SmoothReport<T> {
    /// Border length before the first round and after each round.
    pub lengths: Vec<T>,
    /// Loops with fewer than 3 vertices, left alone.
    pub skipped_loops: usize,
    /// Border vertices that are not on exactly two border edges; never moved.
    pub pinned: usize,
}

/// Midpoint smoothing: each round sweeps every loop once in order, moving
/// each vertex to the midpoint of its two loop neighbors (positions as of
/// the move). Returns the smoothed mesh; only border vertices change.
pub fn smooth_borders<T: Real>(mesh: &TriMesh<T>, rounds: usize) -> Result<(TriMesh<T>, SmoothReport<T>)> {
    let borders = detect_borders(mesh)?;
    let mut out = mesh.clone();
    let report = smooth_borders_in_place(&mut out, &borders, rounds);
    if rounds > 0 && !borders.is_empty() {
        out.normals = None;
    }
    Ok((out, report))
}

pub fn smooth_borders_in_place<T: Real>(mesh: &mut TriMesh<T>, borders: &Borders, rounds: usize) -> SmoothReport<T> {
    let degrees = borders.degrees();
    let pinned = degrees.values().filter(|&&d| d != 2).count();
    let skipped_loops = borders.loops.iter().filter(|l| l.len() < 3).count();
    let mut lengths = vec![borders.total_length(mesh)];
    for _ in 0..rounds {
        for cycle in borders.loops.iter().filter(|l| l.len() >= 3) {
            let n = cycle.len();
            for i in 0..n {
                let v1 = cycle[i] as usize;
                if degrees[&cycle[i]] != 2 {
                    continue;
                }
                let v2 = cycle[(i + n - 1) % n] as usize;
                let v3 = cycle[(i + 1) % n] as usize;
                mesh.vertices[v1] = (mesh.vertices[v2] + mesh.vertices[v3]) * T::half();
            }
        }
        lengths.push(borders.total_length(mesh));
    }
    SmoothReport { lengths, skipped_loops, pinned }
}
