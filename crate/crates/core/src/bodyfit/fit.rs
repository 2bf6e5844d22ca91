//! Chamfer and penetration losses and the derivative-free body fit.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{limits, BodyParams, ProxyBody, NUM_PARAMS};
use crate::error::{Error, Result};
use crate::geom::{AreaSampler, KdTree, SurfaceSample, TriMesh, TriangleTree, Vec3};
use crate::num::Real;
use crate::rng::stream;

const SAMPLE_KEY: u64 = 0;
const EVAL_KEY: u64 = 1;

/// Sum of nearest distances from each point of `from` to the tree.
fn directed<T: Real>(from: &[Vec3<T>], to: &KdTree<T>) -> T {
    from.iter().map(|&p| to.nearest(p).expect("nonempty tree").1.sqrt()).fold(T::zero(), |a, b| a + b)
}

/// Two-sided Chamfer distance with unsquared, unnormalized sums.
pub fn chamfer<T: Real>(u: &[Vec3<T>], v: &[Vec3<T>]) -> Result<T> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Empty("chamfer needs two nonempty point sets".into()));
    }
    Ok(directed(u, &KdTree::new(v)) + directed(v, &KdTree::new(u)))
}

/// Inside/outside and distance queries against a fixed target mesh.
pub struct Target<T> {
    tree: TriangleTree<T>,
    vertices: KdTree<T>,
}

impl<T: Real> Target<T> {
    pub fn new(mesh: &TriMesh<T>) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::Empty("target mesh has no faces".into()));
        }
        Ok(Self { tree: TriangleTree::new(mesh), vertices: KdTree::new(&mesh.vertices) })
    }

    /// Generalized winding number below 1/2.
    pub fn is_outside(&self, p: Vec3<T>) -> bool {
        !self.tree.is_inside(p)
    }

    /// Distance to the nearest target vertex.
    pub fn vertex_distance(&self, p: Vec3<T>) -> T {
        self.vertices.nearest(p).expect("nonempty target").1.sqrt()
    }

    pub fn outside_mask(&self, points: &[Vec3<T>]) -> Vec<bool> {
        points.par_iter().map(|&p| self.is_outside(p)).collect()
    }

    pub fn penetration(&self, points: &[Vec3<T>]) -> T {
        self.outside_mask(points)
            .iter()
            .zip(points)
            .filter(|(&o, _)| o)
            .map(|(_, &p)| self.vertex_distance(p))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn outside_fraction(&self, points: &[Vec3<T>]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        self.outside_mask(points).iter().filter(|&&o| o).count() as f64 / points.len() as f64
    }

    /// Side and surface distance of each point, for re-testing only points
    /// that later move at least that far.
    fn sides(&self, points: &[Vec3<T>]) -> Vec<Side<T>> {
        points
            .par_iter()
            .map(|&p| Side {
                at: p,
                outside: self.is_outside(p),
                clearance_sq: self.tree.closest_point(p).map_or(T::zero(), |c| c.dist_sq),
            })
            .collect()
    }

    /// Penetration of `points`, which moved from the positions `sides` was built at.
    fn local_penetration(&self, points: &[Vec3<T>], sides: &[Side<T>]) -> T {
        points
            .iter()
            .zip(sides)
            .filter(|(&p, s)| if (p - s.at).norm_sq() < s.clearance_sq { s.outside } else { self.is_outside(p) })
            .map(|(&p, _)| self.vertex_distance(p))
            .fold(T::zero(), |a, b| a + b)
    }
}

#[derive(Clone, Copy, Debug)]
struct Side<T> {
    at: Vec3<T>,
    outside: bool,
    clearance_sq: T,
}

/// Sum over body vertices outside `full` of their distance to the nearest
/// vertex of `full`.
pub fn penetration<T: Real>(body: &TriMesh<T>, full: &TriMesh<T>) -> Result<T> {
    Ok(Target::new(full)?.penetration(&body.vertices))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub beta_pen: f64,
    /// Points sampled on each surface per iteration.
    pub samples: usize,
    pub iterations: usize,
    /// Central-difference step.
    pub fd_step: f64,
    /// Initial length of the normalized descent step.
    pub initial_step: f64,
    /// Line search gives up below this step length.
    pub min_step: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            beta_pen: 1.0,
            samples: 2000,
            iterations: 100,
            fd_step: 1e-3,
            initial_step: 0.05,
            min_step: 1e-4,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_pen >= 0.0) {
            return Err(Error::validation("penetration weight must be non-negative"));
        }
        if self.samples == 0 {
            return Err(Error::validation("need at least one surface sample"));
        }
        if !(self.fd_step > 0.0 && self.initial_step > 0.0 && self.min_step > 0.0) {
            return Err(Error::validation("steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub iteration: usize,
    pub loss: f64,
    pub chamfer: f64,
    pub penetration: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: BodyParams,
    /// False when no iteration lowered the loss; `params` is then the input.
    pub improved: bool,
    /// Whether the initial parameters had to be clamped into the limits.
    pub clamped: bool,
    /// Loss terms before and after, on a fixed evaluation sample set.
    pub initial: LossTerms,
    pub final_terms: LossTerms,
    pub log: Vec<FitRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub chamfer: f64,
    pub penetration: f64,
    pub total: f64,
}

impl FitResult {
    pub fn save_log(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.log {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed sample sets of one loss evaluation: barycentric samples on the
/// body topology and points on the target.
struct Samples {
    body: Vec<SurfaceSample<f64>>,
    target: KdTree<f64>,
    target_points: Vec<Vec3<f64>>,
}

impl Samples {
    fn draw(body: &TriMesh<f64>, target: &TriMesh<f64>, n: usize, seed: u64, keys: &[u64]) -> Self {
        let mut rng = stream(seed, keys);
        let area = AreaSampler::new(body);
        let body = (0..n).filter_map(|_| area.sample(&mut rng)).collect();
        let target_points = target.sample_surface(n, &mut rng);
        Self { body, target: KdTree::new(&target_points), target_points }
    }

    fn chamfer(&self, mesh: &TriMesh<f64>) -> f64 {
        let u: Vec<Vec3<f64>> = self.body.iter().map(|s| s.point(mesh)).collect();
        directed(&u, &self.target) + directed(&self.target_points, &KdTree::new(&u))
    }
}

struct Problem<'a> {
    body: &'a ProxyBody,
    target: &'a Target<f64>,
    cfg: &'a FitConfig,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Problem<'_> {
    fn mesh(&self, x: &[f64]) -> TriMesh<f64> {
        TriMesh::new(self.body.vertices(&BodyParams::from_vec(x)), self.body.faces().to_vec())
    }

    /// Loss with the outside indicator recomputed.
    fn exact(&self, x: &[f64], s: &Samples) -> LossTerms {
        let mesh = self.mesh(x);
        let chamfer = s.chamfer(&mesh);
        let penetration = self.target.penetration(&mesh.vertices);
        LossTerms { chamfer, penetration, total: chamfer + self.cfg.beta_pen * penetration }
    }

    /// Loss near the parameters `sides` was computed at.
    fn local(&self, x: &[f64], s: &Samples, sides: &[Side<f64>]) -> f64 {
        let mesh = self.mesh(x);
        let mut l = s.chamfer(&mesh);
        if self.cfg.beta_pen > 0.0 {
            l += self.cfg.beta_pen * self.target.local_penetration(&mesh.vertices, sides);
        }
        l
    }

    /// Central differences of [`Self::local`].
    fn gradient(&self, x: &[f64], s: &Samples, sides: &[Side<f64>]) -> Vec<f64> {
        let h = self.cfg.fd_step;
        (0..x.len())
            .into_par_iter()
            .map(|i| {
                let (a, b) = ((x[i] - h).max(self.lo[i]), (x[i] + h).min(self.hi[i]));
                if b <= a {
                    return 0.0;
                }
                let at = |v: f64| {
                    let mut y = x.to_vec();
                    y[i] = v;
                    self.local(&y, s, sides)
                };
                (at(b) - at(a)) / (b - a)
            })
            .collect()
    }

    fn clamp(&self, x: &mut [f64]) {
        for ((v, &l), &h) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.max(l).min(h);
        }
    }
}

const ARMIJO: f64 = 1e-4;
/// Consecutive failed line searches that end the fit.
const MAX_FAILURES: usize = 3;

fn scaled_identity(n: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = scale;
    }
    m
}

/// BFGS update of a dense inverse Hessian; skipped without positive curvature.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64]) {
    let n = s.len();
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    if !(sy > 1e-12) {
        return;
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Fits body parameters to `target` by numerical-gradient descent with a
/// backtracking line search under the parameter limits.
///
/// Each iteration draws fresh surface samples, differentiates the loss by
/// central differences (re-testing inside/outside only for vertices that
/// moved at least their distance to the target surface), and backtracks along a BFGS direction until the exact loss
/// drops.
/// The returned loss terms are measured on one fixed sample set; if the
/// result is not better than the start there, the start is returned.
pub fn fit(body: &ProxyBody, target: &TriMesh<f64>, init: &BodyParams, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    init.validate()?;
    target.validate()?;
    let tgt = Target::new(target)?;
    let (start, clamped) = init.clamp();
    let (lo, hi) = limits();
    let problem = Problem { body, target: &tgt, cfg, lo, hi };

    let x0 = start.to_vec();
    let eval = Samples::draw(&problem.mesh(&x0), target, cfg.samples, cfg.seed, &[EVAL_KEY]);
    let initial = problem.exact(&x0, &eval);

    let mut x = x0.clone();
    let n = x.len();
    // inverse Hessian estimate; `None` until the first gradient sets its scale
    let mut hinv: Option<Vec<f64>> = None;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut log = Vec::new();
    let mut failures = 0;
    for it in 0..cfg.iterations {
        let mesh = problem.mesh(&x);
        let s = Samples::draw(&mesh, target, cfg.samples, cfg.seed, &[SAMPLE_KEY, it as u64]);
        let current = problem.exact(&x, &s);
        if it == 0 {
            log.push(FitRecord {
                iteration: 0,
                loss: current.total,
                chamfer: current.chamfer,
                penetration: current.penetration,
                step: 0.0,
            });
        }
        let sides = if cfg.beta_pen > 0.0 { tgt.sides(&mesh.vertices) } else { Vec::new() };
        let g = problem.gradient(&x, &s, &sides);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            break;
        }
        if let (Some(h), Some((px, pg))) = (hinv.as_mut(), prev.take()) {
            let sv: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
            bfgs_update(h, &sv, &yv);
        }
        let h = hinv.get_or_insert_with(|| scaled_identity(n, cfg.initial_step / norm));
        let mut accepted = None;
        for attempt in 0..2 {
            let d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut alpha = 1.0;
            while slope < 0.0 && alpha * len >= cfg.min_step {
                let mut y: Vec<f64> = x.iter().zip(&d).map(|(&v, &di)| v + alpha * di).collect();
                problem.clamp(&mut y);
                let trial = problem.exact(&y, &s);
                if trial.total <= current.total + ARMIJO * alpha * slope && trial.total < current.total {
                    accepted = Some((y, trial, alpha * len));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || attempt == 1 {
                break;
            }
            // the quasi-Newton direction failed: restart from a short gradient step
            *h = scaled_identity(n, cfg.initial_step / norm);
        }
        let Some((y, trial, step)) = accepted else {
            // these samples admit no descent; fresh ones might
            failures += 1;
            if failures >= MAX_FAILURES {
                break;
            }
            continue;
        };
        failures = 0;
        prev = Some((x, g));
        x = y;
        log.push(FitRecord {
            iteration: it + 1,
            loss: trial.total,
            chamfer: trial.chamfer,
            penetration: trial.penetration,
            step,
        });
    }

    let candidate = problem.exact(&x, &eval);
    let improved = candidate.total < initial.total;
    let (params, final_terms) = if improved { (BodyParams::from_vec(&x), candidate) } else { (start, initial) };
    debug_assert_eq!(params.to_vec().len(), NUM_PARAMS);
    Ok(FitResult { params, improved, clamped, initial, final_terms, log })
}
