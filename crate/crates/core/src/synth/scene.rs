//! Analytic scenes: a colored sphere, or a capsule dummy wearing a shirt
//! shell and a pants shell.

use serde::{Deserialize, Serialize};

use crate::bodyfit::model::{BodyParams, Pose, NUM_SEGMENTS, PANTS_SEGMENTS, SHIRT_SEGMENTS};
use crate::error::{Error, Result};
use crate::field::{FieldSample, OccupancyField, RadianceField};
use crate::geom::{Capsule, Label, Vec3};
use crate::num::{cast, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarmentSpec {
    pub shirt_thickness: f64,
    pub pants_thickness: f64,
    pub shirt_color: [f64; 3],
    pub pants_color: [f64; 3],
    pub skin_color: [f64; 3],
}

impl Default for GarmentSpec {
    fn default() -> Self {
        Self {
            shirt_thickness: 0.02,
            pants_thickness: 0.015,
            shirt_color: [0.85, 0.25, 0.2],
            pants_color: [0.2, 0.3, 0.75],
            skin_color: [0.9, 0.75, 0.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SceneKind {
    Sphere { radius: f64 },
    Dummy { body: BodyParams, garments: GarmentSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub camera_seed: u64,
    pub camera_distance: f64,
    pub fov_degrees: f64,
    /// Cameras stay within this many degrees of the horizontal plane.
    pub max_elevation_degrees: f64,
    /// Lattice points per axis for the ground-truth meshes.
    pub gt_resolution: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::dummy(0)
    }
}

impl SceneSpec {
    fn with_kind(kind: SceneKind) -> Self {
        Self {
            kind,
            views: 20,
            width: 64,
            height: 64,
            camera_seed: 0,
            camera_distance: 2.0,
            fov_degrees: 40.0,
            max_elevation_degrees: 60.0,
            gt_resolution: 128,
        }
    }

    pub fn sphere() -> Self {
        Self::with_kind(SceneKind::Sphere { radius: 0.3 })
    }

    /// Dressed dummy; `variant` picks one of several shapes and poses.
    pub fn dummy(variant: u64) -> Self {
        let mut spec = Self::with_kind(SceneKind::Dummy { body: dummy_body(variant), garments: GarmentSpec::default() });
        spec.camera_seed = variant;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::validation("scene needs at least one view of nonzero size"));
        }
        if !(self.camera_distance > 0.9) {
            return Err(Error::validation("cameras must stay outside the unit scene cube"));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 170.0) {
            return Err(Error::validation("field of view must lie in (0, 170) degrees"));
        }
        if !(0.0..=89.0).contains(&self.max_elevation_degrees) {
            return Err(Error::validation("maximum elevation must lie in [0, 89] degrees"));
        }
        if self.gt_resolution < 2 {
            return Err(Error::validation("ground-truth resolution must be at least 2"));
        }
        match &self.kind {
            SceneKind::Sphere { radius } if !(*radius > 0.0 && *radius < 0.5) => {
                Err(Error::validation("sphere radius must lie in (0, 0.5)"))
            }
            SceneKind::Dummy { body, garments } => {
                body.validate()?;
                if !(garments.shirt_thickness > 0.0 && garments.pants_thickness > 0.0) {
                    return Err(Error::validation("garment shells need positive thickness"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Shape and pose of the dummy for a given variant.
pub fn dummy_body(variant: u64) -> BodyParams {
    use crate::bodyfit::model::beta;
    let mut p = BodyParams::t_pose();
    let k = (variant % 4) as f64;
    p.beta[beta::TORSO_RADIUS] = 1.05 + 0.05 * k;
    p.beta[beta::TORSO_LENGTH] = 0.95 + 0.03 * k;
    p.beta[beta::ARM_RADIUS] = 1.1 - 0.04 * k;
    p.beta[beta::LEG_RADIUS] = 1.05 + 0.03 * k;
    p.beta[beta::LEG_LENGTH] = 0.95 + 0.02 * k;
    p.beta[beta::SHOULDER_WIDTH] = 1.0 + 0.04 * k;
    p.theta[1] = 0.3 - 0.2 * k;
    // arms lowered, elbows and knees slightly bent
    p.set_joint_angle(5, Vec3::new(0.0, 0.0, -0.45 - 0.05 * k));
    p.set_joint_angle(6, Vec3::new(0.0, 0.0, 0.45 + 0.05 * k));
    p.set_joint_angle(7, Vec3::new(0.0, -0.3 - 0.1 * k, 0.0));
    p.set_joint_angle(8, Vec3::new(0.0, 0.3 + 0.1 * k, 0.0));
    p.set_joint_angle(9, Vec3::new(-0.15 * k, 0.0, 0.08));
    p.set_joint_angle(10, Vec3::new(0.1, 0.0, -0.08));
    p.set_joint_angle(11, Vec3::new(0.15 + 0.1 * k, 0.0, 0.0));
    p.set_joint_angle(12, Vec3::new(0.1, 0.0, 0.0));
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Body,
    Shirt,
    Pants,
}

impl Layer {
    pub fn label(self) -> Label {
        match self {
            Layer::Body => Label::NonClothing,
            Layer::Shirt => Label::Upper,
            Layer::Pants => Label::Lower,
        }
    }
}

/// Direction towards the light, in world coordinates.
const LIGHT: [f64; 3] = [0.4, 0.75, 0.5];
const AMBIENT: f64 = 0.35;

/// First intersection of a ray with the scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3<f64>,
    pub normal: Vec3<f64>,
    pub label: Label,
    pub color: [f64; 3],
}

/// Closed-form occupancy, class and color of a scene.
#[derive(Clone, Debug)]
pub struct AnalyticScene {
    parts: Vec<(Layer, Capsule<f64>)>,
    sphere: bool,
    garments: GarmentSpec,
}

impl AnalyticScene {
    pub fn new(kind: &SceneKind) -> Self {
        match kind {
            SceneKind::Sphere { radius } => Self {
                parts: vec![(Layer::Body, Capsule::new(Vec3::zero(), Vec3::zero(), *radius))],
                sphere: true,
                garments: GarmentSpec::default(),
            },
            SceneKind::Dummy { body, garments } => {
                let (body, _) = body.clamp();
                let posed = Pose::new(&body).capsules(&body.beta);
                let mut parts: Vec<(Layer, Capsule<f64>)> = posed.iter().map(|&c| (Layer::Body, c)).collect();
                parts.extend(SHIRT_SEGMENTS.iter().map(|&s| (Layer::Shirt, posed[s].inflate(garments.shirt_thickness))));
                parts.extend(PANTS_SEGMENTS.iter().map(|&s| (Layer::Pants, posed[s].inflate(garments.pants_thickness))));
                Self { parts, sphere: false, garments: garments.clone() }
            }
        }
    }

    /// Body capsules only.
    pub fn body_capsules(&self) -> Vec<Capsule<f64>> {
        self.parts.iter().filter(|p| p.0 == Layer::Body).map(|p| p.1).collect()
    }

    pub fn has_garments(&self) -> bool {
        self.parts.iter().any(|p| p.0 != Layer::Body)
    }

    fn layer_distance(&self, layer: Layer, x: Vec3<f64>) -> f64 {
        self.parts.iter().filter(|p| p.0 == layer).map(|p| p.1.distance(x)).fold(f64::INFINITY, f64::min)
    }

    /// Signed distance to the whole scene.
    pub fn distance(&self, x: Vec3<f64>) -> f64 {
        self.parts.iter().map(|p| p.1.distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn body_distance(&self, x: Vec3<f64>) -> f64 {
        self.layer_distance(Layer::Body, x)
    }

    /// Layer whose surface passes closest to `x`, preferring shirt, then pants.
    pub fn layer_at(&self, x: Vec3<f64>) -> Layer {
        let mut best = (Layer::Body, f64::INFINITY);
        for layer in [Layer::Shirt, Layer::Pants, Layer::Body] {
            let d = self.layer_distance(layer, x).abs();
            if d < best.1 - 1e-9 {
                best = (layer, d);
            }
        }
        best.0
    }

    pub fn label_at(&self, x: Vec3<f64>) -> Label {
        self.layer_at(x).label()
    }

    /// Unshaded surface color at `x`.
    pub fn albedo(&self, x: Vec3<f64>) -> [f64; 3] {
        if self.sphere {
            let n = x.try_normalize(1e-12).unwrap_or(Vec3::unit_y());
            return [0.5 + 0.35 * n.x, 0.5 + 0.35 * n.y, 0.5 + 0.35 * n.z];
        }
        match self.layer_at(x) {
            Layer::Shirt => self.garments.shirt_color,
            Layer::Pants => self.garments.pants_color,
            Layer::Body => self.garments.skin_color,
        }
    }

    /// Outward normal of the nearest surface.
    pub fn normal(&self, x: Vec3<f64>) -> Vec3<f64> {
        let (_, c) = self
            .parts
            .iter()
            .map(|p| (p.1.distance(x), p.1))
            .fold((f64::INFINITY, self.parts[0].1), |a, b| if b.0 < a.0 { b } else { a });
        c.normal(x)
    }

    /// Lambertian shading with an ambient term.
    pub fn shade(&self, x: Vec3<f64>, normal: Vec3<f64>) -> [f64; 3] {
        let light = Vec3::from_array(LIGHT).normalize();
        let k = AMBIENT + (1.0 - AMBIENT) * normal.dot(light).max(0.0);
        self.albedo(x).map(|c| (c * k).min(1.0))
    }

    pub fn first_hit(&self, origin: Vec3<f64>, dir: Vec3<f64>) -> Option<Hit> {
        let (t, capsule) = self
            .parts
            .iter()
            .filter_map(|p| p.1.intersect(origin, dir).map(|t| (t, p.1)))
            .fold(None, |best: Option<(f64, Capsule<f64>)>, c| match best {
                Some(b) if b.0 <= c.0 => Some(b),
                _ => Some(c),
            })?;
        let point = origin + dir * t;
        let normal = capsule.normal(point);
        Some(Hit { t, point, normal, label: self.label_at(point), color: self.shade(point, normal) })
    }
}

impl<T: Real> OccupancyField<T> for AnalyticScene {
    fn occupancy(&self, x: Vec3<T>) -> T {
        if self.distance(x.cast()) < 0.0 {
            T::one()
        } else {
            T::zero()
        }
    }
}

impl<T: Real> RadianceField<T> for AnalyticScene {
    fn sample(&self, x: Vec3<T>, _dir: Vec3<T>) -> FieldSample<T> {
        let p = x.cast();
        let c = self.shade(p, self.normal(p));
        FieldSample { value: self.occupancy(x), color: c.map(cast) }
    }
}

/// Body capsules plus shell capsules.
pub const MAX_PARTS: usize = NUM_SEGMENTS + SHIRT_SEGMENTS.len() + PANTS_SEGMENTS.len();

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shells_enclose_body() {
        let scene = AnalyticScene::new(&SceneSpec::dummy(0).kind);
        let mut rng = crate::rng::stream(1, &[]);
        for _ in 0..2000 {
            let x: Vec3<f64> = crate::rng::unit_vector::<f64>(&mut rng) * 0.45;
            if scene.body_distance(x) < 0.0 {
                assert!(OccupancyField::<f64>::occupancy(&scene, x) == 1.0);
            }
        }
        assert_eq!(scene.parts.len(), MAX_PARTS);
    }

    #[test]
    fn labels_of_surface_points() {
        let scene = AnalyticScene::new(&SceneSpec::dummy(0).kind);
        // straight down onto the top of the head
        let hit = scene.first_hit(Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, -1.0, 0.0)).unwrap();
        assert_eq!(hit.label, Label::NonClothing);
        // torso front
        let chest = Pose::new(&dummy_body(0)).position[2];
        let hit = scene.first_hit(chest + Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(hit.label, Label::Upper);
        assert!(hit.normal.z > 0.5);
        assert!(scene.first_hit(Vec3::new(0.0, 2.0, 0.0), Vec3::new(0.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = SceneSpec::dummy(2);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&s).unwrap(), spec);
        let sphere: SceneSpec = serde_json::from_str(r#"{"kind": {"type": "sphere", "radius": 0.3}, "views": 4}"#).unwrap();
        assert_eq!(sphere.views, 4);
        sphere.validate().unwrap();
        let mut bad = SceneSpec::sphere();
        bad.views = 0;
        assert!(bad.validate().is_err());
    }
}
