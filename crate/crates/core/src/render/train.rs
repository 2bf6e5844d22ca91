//! Field optimization: per-ray reverse passes through compositing and the
//! normal-consistency term, reduced deterministically and applied with Adam.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::composite::{composite_occupancy, composite_occupancy_backward};
use super::loss::color_distance;
use super::sampling::{deltas, importance_depths, merge_depths, stratified_depths, Source};
use super::{bounded_ray, PixelRay};
use crate::error::{Error, Result};
use crate::field::{FeatureSampler, FieldMode, FieldParams, NeuralField, DENSITY_REFERENCE_STEP, GRADIENT_STEP, NORMAL_EPS};
use crate::geom::{Camera, RgbImage, Vec2, Vec3};
use crate::num::Real;
use crate::rng::{stream, unit_vector};

/// Rays of one batch are split into this many fixed chunks whose gradients
/// are summed in order, so results do not depend on the thread count.
const GRADIENT_CHUNKS: usize = 16;

const BATCH_KEY: u64 = 0;
const RAY_KEY: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rays_per_batch: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Weight of the normal-consistency loss.
    pub lambda: f64,
    /// Perturbation radius of the normal loss, annealed linearly from start to end.
    pub eps_start: f64,
    pub eps_end: f64,
    pub learning_rate: f64,
    /// Factor the learning rate has decayed by (exponentially) at the last epoch.
    pub lr_decay: f64,
    /// Share of each batch drawn from foreground rays (non-black target),
    /// the rest from background rays.
    pub foreground_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            rays_per_batch: 256,
            n_coarse: 32,
            n_fine: 32,
            lambda: 0.1,
            eps_start: 0.1,
            eps_end: 0.01,
            learning_rate: 5e-4,
            lr_decay: 0.1,
            foreground_fraction: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::validation("lambda must be non-negative"));
        }
        if !(self.eps_start >= self.eps_end && self.eps_end >= 0.0) {
            return Err(Error::validation("perturbation schedule needs eps_start >= eps_end >= 0"));
        }
        if self.rays_per_batch == 0 || self.n_coarse == 0 || self.n_fine == 0 {
            return Err(Error::validation("ray and sample counts must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.lr_decay > 0.0) {
            return Err(Error::validation("learning rate and decay must be positive"));
        }
        if !(0.0..=1.0).contains(&self.foreground_fraction) {
            return Err(Error::validation("foreground fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn eps_at(&self, epoch: usize) -> f64 {
        let f = if self.epochs > 1 { epoch as f64 / (self.epochs - 1) as f64 } else { 0.0 };
        self.eps_start + (self.eps_end - self.eps_start) * f
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let f = if self.epochs > 0 { epoch as f64 / self.epochs as f64 } else { 0.0 };
        self.learning_rate * self.lr_decay.powf(f)
    }
}

/// Training rays of one scene plus the features its field is conditioned on.
#[derive(Clone, Debug)]
pub struct TrainScene<T> {
    pub features: FeatureSampler<T>,
    pub rays: Vec<PixelRay<T>>,
    foreground: Vec<usize>,
    background: Vec<usize>,
}

impl<T: Real> TrainScene<T> {
    /// Uses every pixel whose ray crosses the cube `[-half_extent, half_extent]³`.
    pub fn new(views: Vec<(Camera<T>, RgbImage<T>)>, feature_levels: usize, half_extent: T) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Empty("scene has no views".into()));
        }
        let mut rays = Vec::new();
        for (cam, img) in &views {
            if (img.width, img.height) != (cam.width, cam.height) {
                return Err(Error::validation("image size does not match its camera"));
            }
            for y in 0..img.height {
                for x in 0..img.width {
                    if let Some(ray) = bounded_ray(cam, Camera::<T>::pixel_center(x, y), half_extent) {
                        rays.push(PixelRay { ray, color: img.get(x, y) });
                    }
                }
            }
        }
        if rays.is_empty() {
            return Err(Error::Empty("no pixel ray crosses the scene bounds".into()));
        }
        Ok(Self::from_rays(FeatureSampler::from_views(feature_levels, views), rays))
    }

    /// A scene made of explicit rays, for tests and toy problems.
    pub fn from_rays(features: FeatureSampler<T>, rays: Vec<PixelRay<T>>) -> Self {
        let (foreground, background) =
            (0..rays.len()).partition(|&i| rays[i].color.iter().any(|&c| c > T::zero()));
        Self { features, rays, foreground, background }
    }

    pub fn num_foreground(&self) -> usize {
        self.foreground.len()
    }

    /// A ray index, from the foreground with probability `foreground_fraction`
    /// (or from everything when either side is empty).
    pub fn pick_ray(&self, foreground_fraction: f64, rng: &mut impl Rng) -> usize {
        if self.foreground.is_empty() || self.background.is_empty() {
            return rng.random_range(0..self.rays.len());
        }
        let side = if rng.random::<f64>() < foreground_fraction { &self.foreground } else { &self.background };
        side[rng.random_range(0..side.len())]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    #[serde(rename = "l_rec")]
    pub rec: f64,
    #[serde(rename = "l_norm")]
    pub norm: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
    /// Surface points whose normal loss was skipped for lack of a gradient.
    pub normal_skipped: usize,
}

impl TrainLog {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    steps: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], steps: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.steps += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.steps));
        let c2 = T::lit(1.0 - self.beta2.powi(self.steps));
        let (lr, eps) = (T::lit(lr), T::lit(self.eps));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Head value → (occupancy, d occupancy / d value) for a sample of length `delta`.
fn occupancy_of<T: Real>(mode: FieldMode, v: T, delta: T) -> (T, T) {
    match mode {
        FieldMode::Occupancy => (v, T::one()),
        FieldMode::Density => {
            let e = (-v * delta).exp();
            (T::one() - e, delta * e)
        }
    }
}

/// Scratch tapes reused across rays.
#[derive(Default)]
struct Workspace<T> {
    tapes: Vec<T>,
}

impl<T: Real> Workspace<T> {
    fn ensure(&mut self, slots: usize, tape_len: usize) {
        if self.tapes.len() < slots * tape_len {
            self.tapes.resize(slots * tape_len, T::zero());
        }
    }
}

struct Slots<T> {
    values: Vec<T>,
    colors: Vec<[T; 3]>,
}

fn eval_slots<T: Real>(
    field: &NeuralField<T>,
    pr: &PixelRay<T>,
    depths: &[T],
    first_slot: usize,
    ws: &mut Workspace<T>,
    out: &mut Slots<T>,
) {
    let tl = field.params.tape_len();
    for (k, &t) in depths.iter().enumerate() {
        let s = first_slot + k;
        let tape = &mut ws.tapes[s * tl..(s + 1) * tl];
        let (v, c) = field.eval_tape(pr.ray.point_at(t), pr.ray.direction, tape, true);
        out.values.push(v);
        out.colors.push(c.expect("color requested"));
    }
}

/// Reconstruction loss of one ray given evaluated coarse (slots `0..n_c`) and
/// fine (slots `n_c..`) samples; accumulates the parameter gradient when
/// asked. Also returns the depth of the first merged sample at which the
/// transparency drops below 1/2.
fn rec_core<T: Real>(
    field: &NeuralField<T>,
    pr: &PixelRay<T>,
    tc: &[T],
    tf: &[T],
    slots: &Slots<T>,
    ws: &Workspace<T>,
    grad: Option<&mut [T]>,
) -> (T, Option<T>) {
    let mode = field.params.arch().mode;
    let n_c = tc.len();
    let far = pr.ray.t_far;

    let dc = deltas(tc, far);
    let (occ_c, docc_c): (Vec<T>, Vec<T>) = (0..n_c).map(|i| occupancy_of(mode, slots.values[i], dc[i])).unzip();
    let comp_c = composite_occupancy(&occ_c, &slots.colors[..n_c]);

    let merged = merge_depths(tc, tf);
    let slot_of = |s: Source| match s {
        Source::Coarse(i) => i,
        Source::Fine(k) => n_c + k,
    };
    let depths_m: Vec<T> = merged.iter().map(|m| m.0).collect();
    let dm = deltas(&depths_m, far);
    let idx_m: Vec<usize> = merged.iter().map(|m| slot_of(m.1)).collect();
    let (occ_m, docc_m): (Vec<T>, Vec<T>) =
        idx_m.iter().zip(&dm).map(|(&s, &d)| occupancy_of(mode, slots.values[s], d)).unzip();
    let cols_m: Vec<[T; 3]> = idx_m.iter().map(|&s| slots.colors[s]).collect();
    let comp_f = composite_occupancy(&occ_m, &cols_m);

    let err_c = color_distance(comp_c.color, pr.color);
    let err_f = color_distance(comp_f.color, pr.color);

    if let Some(grad) = grad {
        let n = slots.values.len();
        let mut d_value = vec![T::zero(); n];
        let mut d_color = vec![[T::zero(); 3]; n];
        let unit = |c: [T; 3], e: T| {
            if e > T::zero() {
                [(c[0] - pr.color[0]) / e, (c[1] - pr.color[1]) / e, (c[2] - pr.color[2]) / e]
            } else {
                [T::zero(); 3]
            }
        };
        let (d_occ, d_col) = composite_occupancy_backward(&occ_c, &slots.colors[..n_c], unit(comp_c.color, err_c));
        for i in 0..n_c {
            d_value[i] += d_occ[i] * docc_c[i];
            for k in 0..3 {
                d_color[i][k] += d_col[i][k];
            }
        }
        let (d_occ, d_col) = composite_occupancy_backward(&occ_m, &cols_m, unit(comp_f.color, err_f));
        for (j, &s) in idx_m.iter().enumerate() {
            d_value[s] += d_occ[j] * docc_m[j];
            for k in 0..3 {
                d_color[s][k] += d_col[j][k];
            }
        }
        let tl = field.params.tape_len();
        for s in 0..n {
            field.params.backward(&ws.tapes[s * tl..(s + 1) * tl], d_value[s], Some(d_color[s]), grad);
        }
    }

    let mut trans = T::one();
    let mut surface = None;
    for (j, &o) in occ_m.iter().enumerate() {
        trans *= T::one() - o;
        if trans < T::half() {
            surface = Some(depths_m[j]);
            break;
        }
    }
    (err_c + err_f, surface)
}

/// Normal-consistency term at `x` with perturbation `eps·u`; accumulates
/// `weight` times its gradient. `None` when a normal is undefined.
fn normal_core<T: Real>(
    field: &NeuralField<T>,
    x: Vec3<T>,
    u: Vec3<T>,
    eps: T,
    weight: T,
    ws: &mut Workspace<T>,
    grad: Option<&mut [T]>,
) -> Option<T> {
    let mode = field.params.arch().mode;
    let tl = field.params.tape_len();
    ws.ensure(12, tl);
    let h = T::lit(GRADIENT_STEP);
    let reference = T::lit(DENSITY_REFERENCE_STEP);
    let axes = [Vec3::unit_x(), Vec3::unit_y(), Vec3::unit_z()];
    let points = [x, x + u * eps];
    let mut dodv = [T::zero(); 12];
    let mut grads = [Vec3::zero(); 2];
    for (p, &base) in points.iter().enumerate() {
        let mut g = [T::zero(); 3];
        for (a, &e) in axes.iter().enumerate() {
            let mut o = [T::zero(); 2];
            for (sgn, side) in [T::one(), -T::one()].into_iter().enumerate() {
                let s = p * 6 + a * 2 + sgn;
                let tape = &mut ws.tapes[s * tl..(s + 1) * tl];
                let (v, _) = field.eval_tape(base + e * (h * side), Vec3::unit_z(), tape, false);
                let (occ, d) = occupancy_of(mode, v, reference);
                o[sgn] = occ;
                dodv[s] = d;
            }
            g[a] = (o[0] - o[1]) / (T::two() * h);
        }
        grads[p] = Vec3::new(g[0], g[1], g[2]);
    }
    let norms = [grads[0].norm(), grads[1].norm()];
    if !(norms[0] > T::lit(NORMAL_EPS) && norms[1] > T::lit(NORMAL_EPS)) {
        return None;
    }
    let normals = [-grads[0] / norms[0], -grads[1] / norms[1]];
    let diff = normals[0] - normals[1];
    let loss = diff.norm();
    if let Some(grad) = grad {
        if loss > T::zero() && weight > T::zero() {
            let dn0 = diff * (weight / loss);
            for (p, dn) in [dn0, -dn0].into_iter().enumerate() {
                let n = normals[p];
                // n = -g/|g|  =>  dL/dg = -(dL/dn - n (n . dL/dn)) / |g|
                let dg = -(dn - n * n.dot(dn)) / norms[p];
                for a in 0..3 {
                    let d_o = dg[a] / (T::two() * h);
                    for (sgn, side) in [T::one(), -T::one()].into_iter().enumerate() {
                        let s = p * 6 + a * 2 + sgn;
                        let tape = &ws.tapes[s * tl..(s + 1) * tl];
                        field.params.backward(tape, d_o * side * dodv[s], None, grad);
                    }
                }
            }
        }
    }
    Some(loss)
}

#[derive(Clone, Copy, Debug, Default)]
struct BatchStats {
    rec: f64,
    norm: f64,
    skipped: usize,
}

#[allow(clippy::too_many_arguments)]
fn ray_step<T: Real>(
    field: &NeuralField<T>,
    pr: &PixelRay<T>,
    cfg: &TrainConfig,
    eps: T,
    rng: &mut impl Rng,
    ws: &mut Workspace<T>,
    grad: &mut [T],
    stats: &mut BatchStats,
) {
    let tl = field.params.tape_len();
    let (near, far) = (pr.ray.t_near, pr.ray.t_far);
    ws.ensure(cfg.n_coarse + cfg.n_fine, tl);
    let tc = stratified_depths(near, far, cfg.n_coarse, Some(&mut *rng));
    let mut slots = Slots { values: Vec::new(), colors: Vec::new() };
    eval_slots(field, pr, &tc, 0, ws, &mut slots);
    let dc = deltas(&tc, far);
    let mode = field.params.arch().mode;
    let occ_c: Vec<T> = (0..tc.len()).map(|i| occupancy_of(mode, slots.values[i], dc[i]).0).collect();
    let weights = composite_occupancy(&occ_c, &slots.colors).weights;
    let tf = importance_depths(near, far, &weights, cfg.n_fine, rng);
    eval_slots(field, pr, &tf, tc.len(), ws, &mut slots);
    let (rec, surface) = rec_core(field, pr, &tc, &tf, &slots, ws, Some(&mut *grad));
    stats.rec += rec.as_f64();
    let u: Vec3<T> = unit_vector(rng);
    if let Some(t) = surface {
        let weight = T::lit(cfg.lambda);
        let g = if cfg.lambda > 0.0 { Some(grad) } else { None };
        match normal_core(field, pr.ray.point_at(t), u, eps, weight, ws, g) {
            Some(l) => stats.norm += l.as_f64(),
            None => stats.skipped += 1,
        }
    }
}

/// Optimizes `params` on the given scenes. Each epoch is one Adam step on a
/// batch of rays drawn with replacement: the scene uniformly, then the ray
/// per [`TrainScene::pick_ray`].
pub fn train<T: Real>(
    mut params: FieldParams<T>,
    scenes: &[TrainScene<T>],
    cfg: &TrainConfig,
) -> Result<(FieldParams<T>, TrainLog)> {
    cfg.validate()?;
    if scenes.is_empty() {
        return Err(Error::Empty("no training scenes".into()));
    }
    for s in scenes {
        NeuralField::new(&params, &s.features)?;
        if s.rays.is_empty() {
            return Err(Error::Empty("training scene has no rays".into()));
        }
    }
    let mut adam = Adam::new(params.num_params());
    let mut log = TrainLog::default();
    let chunk = cfg.rays_per_batch.div_ceil(GRADIENT_CHUNKS);
    for epoch in 0..cfg.epochs {
        let mut pick = stream(cfg.seed, &[BATCH_KEY, epoch as u64]);
        let batch: Vec<(usize, usize)> = (0..cfg.rays_per_batch)
            .map(|_| {
                let s = pick.random_range(0..scenes.len());
                (s, scenes[s].pick_ray(cfg.foreground_fraction, &mut pick))
            })
            .collect();
        let eps = T::lit(cfg.eps_at(epoch));
        let snapshot = &params;
        let partials: Vec<(Vec<T>, BatchStats)> = batch
            .par_chunks(chunk)
            .enumerate()
            .map(|(ci, rays)| {
                let mut grad = vec![T::zero(); snapshot.num_params()];
                let mut stats = BatchStats::default();
                let mut ws = Workspace::default();
                for (k, &(s, r)) in rays.iter().enumerate() {
                    let slot = (ci * chunk + k) as u64;
                    let mut rng = stream(cfg.seed, &[RAY_KEY, epoch as u64, slot]);
                    let field = NeuralField { params: snapshot, features: &scenes[s].features };
                    ray_step(&field, &scenes[s].rays[r], cfg, eps, &mut rng, &mut ws, &mut grad, &mut stats);
                }
                (grad, stats)
            })
            .collect();
        let mut grad = vec![T::zero(); params.num_params()];
        let mut stats = BatchStats::default();
        for (g, s) in partials {
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += *b;
            }
            stats.rec += s.rec;
            stats.norm += s.norm;
            stats.skipped += s.skipped;
        }
        let total = stats.rec + cfg.lambda * stats.norm;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("training diverged at epoch {epoch} (loss {total})")));
        }
        adam.step(&mut params.data, &grad, cfg.lr_at(epoch));
        log.normal_skipped += stats.skipped;
        log.records.push(LossRecord { epoch, rec: stats.rec, norm: stats.norm, total });
    }
    Ok((params, log))
}

/// A ray with its sample depths fixed in advance.
#[derive(Clone, Debug)]
pub struct FixedRay<T> {
    pub target: PixelRay<T>,
    pub coarse: Vec<T>,
    pub fine: Vec<T>,
}

impl<T: Real> FixedRay<T> {
    /// Draws coarse and fine depths the same way training does.
    pub fn draw(field: &NeuralField<T>, target: PixelRay<T>, n_coarse: usize, n_fine: usize, rng: &mut impl Rng) -> Self {
        let (near, far) = (target.ray.t_near, target.ray.t_far);
        let coarse = stratified_depths(near, far, n_coarse, Some(&mut *rng));
        let samples = super::sampling::RaySamples::evaluate(field, target.ray, coarse.clone());
        let fine = importance_depths(near, far, &samples.composite().weights, n_fine, rng);
        Self { target, coarse, fine }
    }
}

/// Reconstruction loss of rays with fixed depths, accumulating its parameter
/// gradient into `grad` when given.
pub fn rec_loss_fixed<T: Real>(field: &NeuralField<T>, rays: &[FixedRay<T>], mut grad: Option<&mut [T]>) -> T {
    let mut ws = Workspace::default();
    let mut total = T::zero();
    for r in rays {
        ws.ensure(r.coarse.len() + r.fine.len(), field.params.tape_len());
        let mut slots = Slots { values: Vec::new(), colors: Vec::new() };
        eval_slots(field, &r.target, &r.coarse, 0, &mut ws, &mut slots);
        eval_slots(field, &r.target, &r.fine, r.coarse.len(), &mut ws, &mut slots);
        total += rec_core(field, &r.target, &r.coarse, &r.fine, &slots, &ws, grad.as_deref_mut()).0;
    }
    total
}

/// Normal-consistency term at `x` for a given perturbation direction, with
/// optional gradient accumulation (scaled by `weight`).
pub fn normal_loss_at<T: Real>(
    field: &NeuralField<T>,
    x: Vec3<T>,
    u: Vec3<T>,
    eps: T,
    weight: T,
    grad: Option<&mut [T]>,
) -> Option<T> {
    let mut ws = Workspace::default();
    normal_core(field, x, u, eps, weight, &mut ws, grad)
}

/// Convenience: the training ray through a pixel, if it crosses the scene bounds.
pub fn pixel_ray<T: Real>(cam: &Camera<T>, image: &RgbImage<T>, x: usize, y: usize, half_extent: T) -> Option<PixelRay<T>> {
    bounded_ray(cam, Vec2::new(T::from_usize_lossy(x) + T::half(), T::from_usize_lossy(y) + T::half()), half_extent)
        .map(|ray| PixelRay { ray, color: image.get(x, y) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldArch, PosEncoding};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_arch(mode: FieldMode) -> FieldArch {
        FieldArch {
            encoding: PosEncoding { num_frequencies: 2, include_input: true },
            feature_dim: 3,
            hidden_width: 8,
            hidden_layers: 2,
            color_hidden: 4,
            softplus_beta: 10.0,
            mode,
        }
    }

    fn toy_scene() -> TrainScene<f64> {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -2.0), Vec3::zero(), Vec3::unit_y(), 16.0, 8, 8).unwrap();
        let mut img = RgbImage::filled(8, 8, [0.1, 0.2, 0.3]);
        img.set(3, 4, [0.9, 0.5, 0.1]);
        TrainScene::new(vec![(cam, img)], 1, 0.5).unwrap()
    }

    #[test]
    fn rec_gradient_matches_finite_differences() {
        for mode in [FieldMode::Occupancy, FieldMode::Density] {
            let scene = toy_scene();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let params = FieldParams::<f64>::random(tiny_arch(mode), &mut rng).unwrap();
            let field = NeuralField::new(&params, &scene.features).unwrap();
            let rays: Vec<FixedRay<f64>> =
                (0..4).map(|i| FixedRay::draw(&field, scene.rays[i * 13], 8, 8, &mut rng)).collect();
            let mut grad = vec![0.0; params.num_params()];
            rec_loss_fixed(&field, &rays, Some(&mut grad));
            let h = 1e-6;
            for i in (0..params.num_params()).step_by(7) {
                let mut p = params.clone();
                p.data[i] += h;
                let up = rec_loss_fixed(&NeuralField::new(&p, &scene.features).unwrap(), &rays, None);
                p.data[i] -= 2.0 * h;
                let dn = rec_loss_fixed(&NeuralField::new(&p, &scene.features).unwrap(), &rays, None);
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{mode:?} {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn normal_gradient_matches_finite_differences() {
        let scene = toy_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = FieldParams::<f64>::random(tiny_arch(FieldMode::Occupancy), &mut rng).unwrap();
        let field = NeuralField::new(&params, &scene.features).unwrap();
        let x = Vec3::new(0.05, -0.1, 0.02);
        let u = Vec3::new(0.3, 0.4, -0.5).normalize();
        let mut grad = vec![0.0; params.num_params()];
        let l0 = normal_loss_at(&field, x, u, 0.1, 1.0, Some(&mut grad)).unwrap();
        assert!(l0 > 0.0);
        let h = 1e-6;
        for i in (0..params.num_params()).step_by(5) {
            let mut p = params.clone();
            p.data[i] += h;
            let up = normal_loss_at(&NeuralField::new(&p, &scene.features).unwrap(), x, u, 0.1, 1.0, None).unwrap();
            p.data[i] -= 2.0 * h;
            let dn = normal_loss_at(&NeuralField::new(&p, &scene.features).unwrap(), x, u, 0.1, 1.0, None).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
        assert_eq!(normal_loss_at(&field, x, u, 0.0, 1.0, None), Some(0.0));
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let scene = toy_scene();
        let params = FieldParams::<f64>::random(tiny_arch(FieldMode::Occupancy), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (out, log) = train(params.clone(), &[scene], &cfg).unwrap();
        assert_eq!(out, params);
        assert!(log.records.is_empty());
    }

    #[test]
    fn single_pixel_overfits() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -2.0), Vec3::zero(), Vec3::unit_y(), 16.0, 8, 8).unwrap();
        let ray = bounded_ray(&cam, Camera::<f64>::pixel_center(4, 4), 0.5).unwrap();
        let target = [0.8f32, 0.3, 0.1];
        let scene = TrainScene::from_rays(FeatureSampler::new(1), vec![PixelRay { ray: ray.cast(), color: target }]);
        let params = FieldParams::<f32>::random(tiny_arch(FieldMode::Occupancy), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let cfg = TrainConfig { epochs: 300, rays_per_batch: 4, n_coarse: 16, n_fine: 16, learning_rate: 1e-2, ..TrainConfig::default() };
        let (out, log) = train(params, std::slice::from_ref(&scene), &cfg).unwrap();
        let field = NeuralField::new(&out, &scene.features).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, fine) = super::super::sampling::sample_ray(&field, scene.rays[0].ray, 16, 16, &mut rng);
        let c = fine.composite().color;
        assert!(color_distance(c, target) < 0.02, "rendered {c:?}");
        let last = log.records.last().unwrap();
        assert!(last.rec < log.records[0].rec);
    }

    #[test]
    fn pick_ray_balances_foreground() {
        let scene = toy_scene();
        let mut black = scene.rays.clone();
        for r in &mut black[1..] {
            r.color = [0.0; 3];
        }
        let scene = TrainScene::from_rays(scene.features, black);
        assert_eq!(scene.num_foreground(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let hits = (0..n).filter(|_| scene.pick_ray(0.5, &mut rng) == 0).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.03, "{hits}");
        assert!((0..100).all(|_| scene.pick_ray(0.0, &mut rng) != 0));
    }

    #[test]
    fn training_is_deterministic() {
        let scene = toy_scene();
        let params = FieldParams::<f32>::random(tiny_arch(FieldMode::Occupancy), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let scene32 = TrainScene::from_rays(
            FeatureSampler::<f32>::new(1),
            scene.rays.iter().map(|r| PixelRay { ray: r.ray.cast(), color: [r.color[0] as f32, r.color[1] as f32, r.color[2] as f32] }).collect(),
        );
        let cfg = TrainConfig { epochs: 5, rays_per_batch: 37, n_coarse: 8, n_fine: 8, ..TrainConfig::default() };
        let a = train(params.clone(), std::slice::from_ref(&scene32), &cfg).unwrap();
        let b = train(params, std::slice::from_ref(&scene32), &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
