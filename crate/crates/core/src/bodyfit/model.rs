//! Articulated capsule body: skeleton, shape and pose parameters, and a
//! fixed-topology skinned surface mesh.
//!
//! The body stands along +y and faces +z; its left side is +x. Rest pose is
//! a T-pose with the arms along ±x.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::march_grid;
use crate::geom::{Capsule, GridSpec, Mat3, TriMesh, Vec3, VoxelGrid};
use crate::num::Real;

pub const NUM_JOINTS: usize = 13;
pub const NUM_BETA: usize = 10;
pub const NUM_THETA: usize = 3 + 3 * NUM_JOINTS;
/// Shape, pose and root translation, flattened.
pub const NUM_PARAMS: usize = NUM_BETA + NUM_THETA + 3;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "spine",
    "chest",
    "neck",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
];

/// Parent joint; `None` hangs off the root frame.
pub const PARENT: [Option<usize>; NUM_JOINTS] =
    [None, None, Some(1), Some(2), Some(3), Some(2), Some(2), Some(5), Some(6), Some(0), Some(0), Some(9), Some(10)];

/// Shape coefficients, each a multiplier on the rest geometry.
pub mod beta {
    pub const TORSO_RADIUS: usize = 0;
    pub const TORSO_LENGTH: usize = 1;
    pub const ARM_RADIUS: usize = 2;
    pub const ARM_LENGTH: usize = 3;
    pub const LEG_RADIUS: usize = 4;
    pub const LEG_LENGTH: usize = 5;
    pub const HEAD_SIZE: usize = 6;
    pub const NECK_LENGTH: usize = 7;
    pub const SHOULDER_WIDTH: usize = 8;
    pub const HIP_WIDTH: usize = 9;
}

pub const SEGMENT_NAMES: [&str; NUM_SEGMENTS] = [
    "hips",
    "lower_torso",
    "abdomen",
    "chest",
    "shoulders",
    "neck",
    "head",
    "left_upper_arm",
    "right_upper_arm",
    "left_forearm",
    "right_forearm",
    "left_thigh",
    "right_thigh",
    "left_shin",
    "right_shin",
];
pub const NUM_SEGMENTS: usize = 15;
/// Joint that carries each segment.
pub const SEGMENT_BONE: [usize; NUM_SEGMENTS] = [0, 0, 1, 2, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
/// Segments covered by the shirt and by the pants of the synthetic dummy.
pub const SHIRT_SEGMENTS: [usize; 5] = [2, 3, 4, 7, 8];
pub const PANTS_SEGMENTS: [usize; 6] = [0, 1, 11, 12, 13, 14];
pub const TORSO_SEGMENTS: [usize; 5] = [0, 1, 2, 3, 4];

/// Overall size of the rest geometry, so the body fits `[-0.5, 0.5]³`.
const SCALE: f64 = 0.92;
pub const SHAPE_RANGE: (f64, f64) = (0.5, 2.0);
pub const TRANSLATION_RANGE: (f64, f64) = (-0.5, 0.5);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    /// Global orientation then one axis-angle per joint.
    pub theta: Vec<f64>,
    #[serde(default)]
    pub translation: [f64; 3],
}

impl Default for BodyParams {
    fn default() -> Self {
        Self::t_pose()
    }
}

impl BodyParams {
    /// Unit shape, zero pose, no translation.
    pub fn t_pose() -> Self {
        Self { beta: vec![1.0; NUM_BETA], theta: vec![0.0; NUM_THETA], translation: [0.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != NUM_BETA || self.theta.len() != NUM_THETA {
            return Err(Error::validation(format!(
                "body params need {NUM_BETA} shape and {NUM_THETA} pose values, got {} and {}",
                self.beta.len(),
                self.theta.len()
            )));
        }
        let all = self.beta.iter().chain(&self.theta).chain(&self.translation);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::validation("body params must be finite"));
        }
        Ok(())
    }

    pub fn joint_angle(&self, joint: usize) -> Vec3<f64> {
        let o = 3 + 3 * joint;
        Vec3::new(self.theta[o], self.theta[o + 1], self.theta[o + 2])
    }

    pub fn set_joint_angle(&mut self, joint: usize, w: Vec3<f64>) {
        let o = 3 + 3 * joint;
        self.theta[o..o + 3].copy_from_slice(&w.to_array());
    }

    pub fn global_orientation(&self) -> Vec3<f64> {
        Vec3::new(self.theta[0], self.theta[1], self.theta[2])
    }

    /// `[beta, theta, translation]` as one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.theta).chain(&self.translation).copied().collect()
    }

    pub fn from_vec(v: &[f64]) -> Self {
        assert_eq!(v.len(), NUM_PARAMS);
        Self {
            beta: v[..NUM_BETA].to_vec(),
            theta: v[NUM_BETA..NUM_BETA + NUM_THETA].to_vec(),
            translation: [v[NUM_PARAMS - 3], v[NUM_PARAMS - 2], v[NUM_PARAMS - 1]],
        }
    }

    /// Projects onto the limit box; the flag reports whether anything moved.
    pub fn clamp(&self) -> (Self, bool) {
        let (lo, hi) = limits();
        let v = self.to_vec();
        let c: Vec<f64> = v.iter().zip(lo.iter().zip(&hi)).map(|(&x, (&l, &h))| x.max(l).min(h)).collect();
        let changed = c != v;
        (Self::from_vec(&c), changed)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_reader(std::io::BufReader::new(Error::open(path)?))?;
        p.validate()?;
        Ok(p)
    }
}

/// Per-axis `(min, max)` of each joint's axis-angle, radians.
pub const JOINT_LIMITS: [[(f64, f64); 3]; NUM_JOINTS] = [
    [(-0.6, 0.6); 3],
    [(-0.6, 0.6); 3],
    [(-0.5, 0.5); 3],
    [(-0.7, 0.7); 3],
    [(-0.7, 0.7); 3],
    [(-1.6, 1.6); 3],
    [(-1.6, 1.6); 3],
    [(-0.5, 0.5), (-2.6, 2.6), (-2.6, 2.6)],
    [(-0.5, 0.5), (-2.6, 2.6), (-2.6, 2.6)],
    [(-2.0, 0.8), (-0.8, 0.8), (-0.9, 0.9)],
    [(-2.0, 0.8), (-0.8, 0.8), (-0.9, 0.9)],
    [(-0.1, 2.6), (-0.2, 0.2), (-0.2, 0.2)],
    [(-0.1, 2.6), (-0.2, 0.2), (-0.2, 0.2)],
];

/// Lower and upper bounds of the flattened parameter vector.
pub fn limits() -> (Vec<f64>, Vec<f64>) {
    let pi = std::f64::consts::PI;
    let mut lo = vec![SHAPE_RANGE.0; NUM_BETA];
    let mut hi = vec![SHAPE_RANGE.1; NUM_BETA];
    lo.extend([-pi; 3]);
    hi.extend([pi; 3]);
    for j in JOINT_LIMITS {
        lo.extend(j.iter().map(|r| r.0));
        hi.extend(j.iter().map(|r| r.1));
    }
    lo.extend([TRANSLATION_RANGE.0; 3]);
    hi.extend([TRANSLATION_RANGE.1; 3]);
    (lo, hi)
}

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z) * SCALE
}

/// Rest-pose joint positions for shape `beta`.
pub fn rest_joints(beta: &[f64]) -> [Vec3<f64>; NUM_JOINTS] {
    use beta::*;
    let lt = beta[TORSO_LENGTH];
    let mut j = [Vec3::zero(); NUM_JOINTS];
    j[1] = j[0] + v(0.0, 0.08 * lt, 0.0);
    j[2] = j[1] + v(0.0, 0.12 * lt, 0.0);
    j[3] = j[2] + v(0.0, 0.10 * lt, 0.0);
    j[4] = j[3] + v(0.0, 0.06 * beta[NECK_LENGTH], 0.0);
    for (side, s) in [(0, 1.0), (1, -1.0)] {
        j[5 + side] = j[2] + v(s * 0.10 * beta[SHOULDER_WIDTH], 0.07 * lt, 0.0);
        j[7 + side] = j[5 + side] + v(s * 0.14 * beta[ARM_LENGTH], 0.0, 0.0);
        j[9 + side] = j[0] + v(s * 0.07 * beta[HIP_WIDTH], -0.04, 0.0);
        j[11 + side] = j[9 + side] + v(0.0, -0.20 * beta[LEG_LENGTH], 0.0);
    }
    j
}

/// Rest-pose capsules for shape `beta`, indexed like [`SEGMENT_NAMES`].
pub fn rest_segments(beta: &[f64]) -> [Capsule<f64>; NUM_SEGMENTS] {
    use beta::*;
    let j = rest_joints(beta);
    let (rt, ra, rl, hs) = (beta[TORSO_RADIUS], beta[ARM_RADIUS], beta[LEG_RADIUS], beta[HEAD_SIZE]);
    let c = |a: Vec3<f64>, b: Vec3<f64>, r: f64| Capsule::new(a, b, r * SCALE);
    let hip_y = j[0] + v(0.0, -0.03, 0.0);
    let hips_half = v(0.07 * beta[HIP_WIDTH], 0.0, 0.0);
    let shoulder_y = j[2] + v(0.0, 0.07 * beta[TORSO_LENGTH], 0.0);
    let shoulders_half = v(0.09 * beta[SHOULDER_WIDTH], 0.0, 0.0);
    [
        c(hip_y - hips_half, hip_y + hips_half, 0.075 * rt),
        c(j[0] + v(0.0, -0.02, 0.0), j[1], 0.085 * rt),
        c(j[1], j[2], 0.085 * rt),
        c(j[2], shoulder_y, 0.095 * rt),
        c(shoulder_y - shoulders_half, shoulder_y + shoulders_half, 0.05 * rt),
        c(j[3] + v(0.0, -0.02, 0.0), j[4], 0.035 * hs),
        c(j[4] + v(0.0, 0.045 * hs, 0.0), j[4] + v(0.0, 0.06 * hs, 0.0), 0.055 * hs),
        c(j[5], j[7], 0.03 * ra),
        c(j[6], j[8], 0.03 * ra),
        c(j[7], j[7] + v(0.13 * beta[ARM_LENGTH], 0.0, 0.0), 0.025 * ra),
        c(j[8], j[8] + v(-0.13 * beta[ARM_LENGTH], 0.0, 0.0), 0.025 * ra),
        c(j[9], j[11], 0.05 * rl),
        c(j[10], j[12], 0.05 * rl),
        c(j[11], j[11] + v(0.0, -0.21 * beta[LEG_LENGTH], 0.0), 0.035 * rl),
        c(j[12], j[12] + v(0.0, -0.21 * beta[LEG_LENGTH], 0.0), 0.035 * rl),
    ]
}

/// World rotation and position of every joint.
#[derive(Clone, Debug)]
pub struct Pose {
    pub rotation: [Mat3<f64>; NUM_JOINTS],
    pub position: [Vec3<f64>; NUM_JOINTS],
    pub rest: [Vec3<f64>; NUM_JOINTS],
}

impl Pose {
    pub fn new(params: &BodyParams) -> Self {
        let rest = rest_joints(&params.beta);
        let root_rot = Mat3::from_axis_angle(params.global_orientation());
        let root_pos = Vec3::from_array(params.translation);
        let mut rotation = [Mat3::identity(); NUM_JOINTS];
        let mut position = [Vec3::zero(); NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            let (prot, ppos, prest) = match PARENT[j] {
                Some(p) => (rotation[p], position[p], rest[p]),
                None => (root_rot, root_pos, Vec3::zero()),
            };
            rotation[j] = prot.mul_mat(&Mat3::from_axis_angle(params.joint_angle(j)));
            position[j] = ppos + prot.mul_vec(rest[j] - prest);
        }
        Self { rotation, position, rest }
    }

    /// Maps a rest-pose point rigidly attached to `joint`.
    #[inline]
    pub fn apply(&self, joint: usize, p: Vec3<f64>) -> Vec3<f64> {
        self.rotation[joint].mul_vec(p - self.rest[joint]) + self.position[joint]
    }

    /// Rigidly posed capsules.
    pub fn capsules(&self, beta: &[f64]) -> [Capsule<f64>; NUM_SEGMENTS] {
        let rest = rest_segments(beta);
        std::array::from_fn(|s| {
            let b = SEGMENT_BONE[s];
            Capsule::new(self.apply(b, rest[s].a), self.apply(b, rest[s].b), rest[s].radius)
        })
    }
}

/// Signed distance to the union of capsules.
pub fn union_distance<T: Real>(capsules: &[Capsule<T>], p: Vec3<T>) -> T {
    capsules.iter().map(|c| c.distance(p)).fold(T::infinity(), T::min)
}

/// Where a template vertex sits relative to one segment.
#[derive(Clone, Copy, Debug)]
struct Influence {
    segment: usize,
    weight: f64,
    /// Axis parameter of the closest axis point.
    t: f64,
    /// Offset from the axis point in units of the segment radius.
    q: Vec3<f64>,
}

/// Width of the blend band between neighbouring segments.
const BLEND_BAND: f64 = 0.02;

/// Template lattice spacing.
pub const TEMPLATE_CELL: f64 = 0.01;

/// Skinned body surface with fixed topology.
///
/// Each template vertex is attached to its closest segment, and to the
/// second closest with a weight that fades from 1/2 at equal distance to 0
/// once the second is [`BLEND_BAND`] farther. A vertex is rebuilt from its
/// axis parameter and radius-relative offset on each attached segment, and
/// those positions are blended after posing.
///
/// Vertices move Lipschitz-continuously in the flattened parameters with
/// constant [`LIPSCHITZ`] (scene units per unit of parameter norm) over
/// the limit box.
#[derive(Clone, Debug)]
pub struct ProxyBody {
    faces: Vec<[u32; 3]>,
    influences: Vec<[Influence; 2]>,
    rest_vertices: Vec<Vec3<f64>>,
}

pub const LIPSCHITZ: f64 = 3.0;

impl ProxyBody {
    /// Builds the template by marching the rest-pose capsule union.
    pub fn new(cell: f64) -> Result<Self> {
        let beta = [1.0; NUM_BETA];
        let segments = rest_segments(&beta);
        let pad = 3.0 * cell;
        let (mut lo, mut hi) = (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY));
        for c in &segments {
            lo = lo.min_elem(c.a.min_elem(c.b) - Vec3::splat(c.radius + pad));
            hi = hi.max_elem(c.a.max_elem(c.b) + Vec3::splat(c.radius + pad));
        }
        let res = |k: usize| ((hi[k] - lo[k]) / cell).ceil() as usize + 1;
        let hi = lo + Vec3::new((res(0) - 1) as f64, (res(1) - 1) as f64, (res(2) - 1) as f64) * cell;
        let spec = GridSpec::new([res(0), res(1), res(2)], lo, hi)?;
        let grid = VoxelGrid::sample(spec, |p| -union_distance(&segments, p));
        let mesh = march_grid(&grid, 0.0);
        let influences = mesh
            .vertices
            .iter()
            .map(|&p| {
                let mut d: Vec<(f64, usize)> = segments.iter().enumerate().map(|(s, c)| (c.distance(p), s)).collect();
                d.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                let w2 = 0.5 * (1.0 - (d[1].0 - d[0].0) / BLEND_BAND).max(0.0);
                [(d[0].1, 1.0 - w2), (d[1].1, w2)].map(|(s, weight)| {
                    let c = &segments[s];
                    let t = c.axis_param(p);
                    Influence { segment: s, weight, t, q: (p - c.axis_point(t)) / c.radius }
                })
            })
            .collect();
        Ok(Self { faces: mesh.faces, influences, rest_vertices: mesh.vertices })
    }

    /// Shared instance at the default tessellation.
    pub fn standard() -> &'static ProxyBody {
        static BODY: OnceLock<ProxyBody> = OnceLock::new();
        BODY.get_or_init(|| ProxyBody::new(TEMPLATE_CELL).expect("template lattice is valid"))
    }

    pub fn num_vertices(&self) -> usize {
        self.rest_vertices.len()
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Template vertices as marched, before any shape change.
    pub fn template_vertices(&self) -> &[Vec3<f64>] {
        &self.rest_vertices
    }

    /// Weight of each segment on vertex `i`.
    pub fn segment_weights(&self, i: usize) -> [(usize, f64); 2] {
        self.influences[i].map(|f| (f.segment, f.weight))
    }

    /// Posed vertex positions; parameters must already be within limits.
    pub fn vertices(&self, params: &BodyParams) -> Vec<Vec3<f64>> {
        let pose = Pose::new(params);
        let rest = rest_segments(&params.beta);
        self.influences
            .iter()
            .map(|inf| {
                inf.iter()
                    .filter(|f| f.weight > 0.0)
                    .map(|f| {
                        let c = &rest[f.segment];
                        let p = c.axis_point(f.t) + f.q * c.radius;
                        pose.apply(SEGMENT_BONE[f.segment], p) * f.weight
                    })
                    .fold(Vec3::zero(), |a, b| a + b)
            })
            .collect()
    }

    /// Body mesh for `params`, clamped into the limit box; the flag reports clamping.
    pub fn mesh<T: Real>(&self, params: &BodyParams) -> Result<(TriMesh<T>, bool)> {
        params.validate()?;
        let (p, clamped) = params.clamp();
        let verts = self.vertices(&p).into_iter().map(|v| v.cast()).collect();
        Ok((TriMesh::new(verts, self.faces.clone()), clamped))
    }
}

/// [`ProxyBody::mesh`] on the standard template.
pub fn body_mesh<T: Real>(params: &BodyParams) -> Result<(TriMesh<T>, bool)> {
    ProxyBody::standard().mesh(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn template_is_closed_and_reproduced() {
        let body = ProxyBody::standard();
        let (m, clamped) = body_mesh::<f64>(&BodyParams::t_pose()).unwrap();
        assert!(!clamped);
        m.validate().unwrap();
        assert!(m.is_closed());
        for (a, b) in m.vertices.iter().zip(body.template_vertices()) {
            assert!(a.dist(*b) < 1e-12);
        }
        let (lo, hi) = m.bounds().unwrap();
        assert!(lo.x > -0.5 && lo.y > -0.5 && hi.x < 0.5 && hi.y < 0.5);
    }

    #[test]
    fn torso_radius_moves_only_torso() {
        let body = ProxyBody::standard();
        let base = body.vertices(&BodyParams::t_pose());
        let mut p = BodyParams::t_pose();
        p.beta[beta::TORSO_RADIUS] = 2.0;
        let fat = body.vertices(&p);
        let rest = rest_segments(&[1.0; NUM_BETA]);
        let mut torso = 0;
        for i in 0..base.len() {
            let w = body.segment_weights(i);
            let on_torso = |s: usize| TORSO_SEGMENTS.contains(&s);
            let torso_weight: f64 = w.iter().filter(|(s, _)| on_torso(*s)).map(|x| x.1).sum();
            if torso_weight == 0.0 {
                assert!(base[i].dist(fat[i]) < 1e-12);
            } else if torso_weight == 1.0 && w[1].1 == 0.0 {
                torso += 1;
                let c = &rest[w[0].0];
                let t = c.axis_param(base[i]);
                let before = base[i].dist(c.axis_point(t));
                let after = fat[i].dist(c.axis_point(t));
                assert!(after > before * 1.9, "{before} -> {after}");
            }
        }
        assert!(torso > 100);
    }

    #[test]
    fn elbow_rotates_forearm() {
        let body = ProxyBody::standard();
        let base = body.vertices(&BodyParams::t_pose());
        let mut p = BodyParams::t_pose();
        p.set_joint_angle(7, Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
        let bent = body.vertices(&p);
        let elbow = rest_joints(&p.beta)[7];
        let axis = Vec3::unit_y();
        let mut count = 0;
        for i in 0..base.len() {
            let w = body.segment_weights(i);
            if w[0] == (9, 1.0) {
                count += 1;
                let (a, b) = (base[i] - elbow, bent[i] - elbow);
                assert!((a.norm() - b.norm()).abs() < 1e-12);
                assert!((a.dot(axis) - b.dot(axis)).abs() < 1e-12);
                let (pa, pb) = (a - axis * a.dot(axis), b - axis * b.dot(axis));
                assert!(pa.dot(pb).abs() < 1e-9 * pa.norm_sq().max(1e-12));
            }
        }
        assert!(count > 50);
    }

    #[test]
    fn clamping_flags_out_of_range() {
        let mut p = BodyParams::t_pose();
        p.beta[0] = 3.0;
        p.theta[3 + 3 * 11] = -1.0;
        let (c, flag) = p.clamp();
        assert!(flag);
        assert_eq!(c.beta[0], 2.0);
        assert_eq!(c.theta[3 + 3 * 11], -0.1);
        let (_, flag) = body_mesh::<f32>(&p).unwrap();
        assert!(flag);
        p.beta.pop();
        assert!(body_mesh::<f64>(&p).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = BodyParams::t_pose();
        p.theta[7] = 0.25;
        p.translation = [0.0, 0.01, 0.0];
        let path = dir.path().join("body.json");
        p.save_json(&path).unwrap();
        assert_eq!(BodyParams::load_json(&path).unwrap(), p);
        let bare: BodyParams = serde_json::from_str(&format!(
            "{{\"beta\": {:?}, \"theta\": {:?}}}",
            vec![1.0; NUM_BETA],
            vec![0.0; NUM_THETA]
        ))
        .unwrap();
        assert_eq!(bare, BodyParams::t_pose());
    }

    fn params_in_box() -> impl Strategy<Value = Vec<f64>> {
        let (lo, hi) = limits();
        let ranges: Vec<_> = lo.into_iter().zip(hi).map(|(l, h)| l..=h).collect();
        ranges
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn lipschitz_in_parameters(v in params_in_box(), dir in prop::collection::vec(-1.0f64..1.0, NUM_PARAMS)) {
            let body = ProxyBody::standard();
            let p = BodyParams::from_vec(&v);
            let step = 1e-4;
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-9);
            let moved: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + step * d / norm).collect();
            let (q, _) = BodyParams::from_vec(&moved).clamp();
            let dp = q.to_vec().iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let a = body.vertices(&p);
            let b = body.vertices(&q);
            let worst = a.iter().zip(&b).map(|(x, y)| x.dist(*y)).fold(0.0, f64::max);
            prop_assert!(worst <= LIPSCHITZ * dp + 1e-12, "{worst} vs {dp}");
        }
    }
}
