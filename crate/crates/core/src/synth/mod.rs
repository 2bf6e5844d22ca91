//! Synthetic scenes with exact ground truth, and evaluation metrics.

pub mod metrics;
pub mod scene;

pub use metrics::{chamfer_eval, psnr, ssim};
pub use scene::{dummy_body, AnalyticScene, GarmentSpec, Hit, Layer, SceneKind, SceneSpec};

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::bodyfit::BodyParams;
use crate::error::{Error, Result};
use crate::extract::march_grid;
use crate::geom::{load_cameras, save_cameras, save_mesh, Camera, GridSpec, Label, RgbImage, TriMesh, Vec3, VoxelGrid};
use crate::scgs::{extract_garment, SemanticMap};

const CAMERA_KEY: u64 = 0xCA3E_8A00;

/// Cameras on a sphere around the origin, looking at it, within the
/// elevation band of `spec`.
pub fn cameras(spec: &SceneSpec) -> Result<Vec<Camera<f64>>> {
    let max_y = spec.max_elevation_degrees.to_radians().sin();
    let focal = 0.5 * spec.width as f64 / (0.5 * spec.fov_degrees.to_radians()).tan();
    (0..spec.views)
        .map(|i| {
            let mut rng = crate::rng::stream(spec.camera_seed, &[CAMERA_KEY, i as u64]);
            let dir = loop {
                let d: Vec3<f64> = crate::rng::unit_vector(&mut rng);
                if d.y.abs() <= max_y {
                    break d;
                }
            };
            // small roll-free jitter of the look-at target
            let target = Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), 0.0);
            let mut cam = Camera::look_at(dir * spec.camera_distance, target, Vec3::unit_y(), focal, spec.width, spec.height)?;
            if spec.height != spec.width {
                cam = Camera::new(focal, focal, cam.cx, cam.cy, spec.width, spec.height, cam.pose)?;
            }
            Ok(cam)
        })
        .collect()
}

/// Shaded image and one-hot class map of the first hits seen by `camera`.
/// Background pixels are black and Non-Clothing.
pub fn render_view(scene: &AnalyticScene, camera: &Camera<f64>) -> (RgbImage<f64>, SemanticMap<f64>) {
    let (w, h) = (camera.width, camera.height);
    let pixels: Vec<([f64; 3], Label)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let dir = camera.direction(Camera::<f64>::pixel_center(i % w, i / w));
            match scene.first_hit(camera.center(), dir) {
                Some(hit) => (hit.color, hit.label),
                None => ([0.0; 3], Label::NonClothing),
            }
        })
        .collect();
    let image = RgbImage { width: w, height: h, data: pixels.iter().map(|p| p.0).collect() };
    let map = SemanticMap { width: w, height: h, data: pixels.iter().map(|p| p.1.one_hot()).collect() };
    (image, map)
}

/// Ground-truth meshes of a scene.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Outer surface with labels and colors.
    pub dressed: TriMesh<f64>,
    pub body: Option<TriMesh<f64>>,
    pub upper: Option<TriMesh<f64>>,
    pub lower: Option<TriMesh<f64>>,
}

fn march_distance(res: usize, f: impl Fn(Vec3<f64>) -> f64 + Sync) -> Result<TriMesh<f64>> {
    let grid = VoxelGrid::sample(GridSpec::cube(res, 0.5)?, |p| -f(p));
    Ok(march_grid(&grid, 0.0))
}

/// Marches the scene's signed distance (and the body's alone) on
/// `[-0.5, 0.5]³`; garments are the all-Upper and all-Lower faces of the
/// labeled outer surface.
pub fn ground_truth(scene: &AnalyticScene, resolution: usize) -> Result<GroundTruth> {
    let mut dressed = march_distance(resolution, |p| scene.distance(p))?;
    dressed.labels = Some(dressed.vertices.iter().map(|&v| scene.label_at(v)).collect());
    dressed.colors = Some(dressed.vertices.iter().map(|&v| scene.albedo(v)).collect());
    if !scene.has_garments() {
        return Ok(GroundTruth { dressed, body: None, upper: None, lower: None });
    }
    let body = march_distance(resolution, |p| scene.body_distance(p))?;
    let upper = extract_garment(&dressed, &[Label::Upper])?.union;
    let lower = extract_garment(&dressed, &[Label::Lower])?.union;
    Ok(GroundTruth { dressed, body: Some(body), upper: Some(upper), lower: Some(lower) })
}

/// Everything generated for one scene.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub spec: SceneSpec,
    pub cameras: Vec<Camera<f64>>,
    pub images: Vec<RgbImage<f64>>,
    pub semantic: Vec<SemanticMap<f64>>,
    pub truth: GroundTruth,
}

impl SceneBundle {
    pub fn body_params(&self) -> Option<&BodyParams> {
        match &self.spec.kind {
            SceneKind::Dummy { body, .. } => Some(body),
            SceneKind::Sphere { .. } => None,
        }
    }

    pub fn scene(&self) -> AnalyticScene {
        AnalyticScene::new(&self.spec.kind)
    }
}

pub fn generate(spec: &SceneSpec) -> Result<SceneBundle> {
    spec.validate()?;
    let scene = AnalyticScene::new(&spec.kind);
    let cameras = cameras(spec)?;
    let (images, semantic) = cameras.iter().map(|c| render_view(&scene, c)).unzip();
    let truth = ground_truth(&scene, spec.gt_resolution)?;
    Ok(SceneBundle { spec: spec.clone(), cameras, images, semantic, truth })
}

/// Paths inside a bundle directory.
pub struct BundleLayout {
    pub root: PathBuf,
}

impl BundleLayout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn cameras(&self) -> PathBuf {
        self.root.join("cameras.json")
    }

    pub fn scene(&self) -> PathBuf {
        self.root.join("scene.json")
    }

    pub fn image(&self, i: usize) -> PathBuf {
        self.root.join("images").join(format!("{i:04}.png"))
    }

    pub fn semantic(&self, i: usize) -> PathBuf {
        self.root.join("semantic").join(format!("{i:04}.scgs"))
    }

    pub fn gt(&self, name: &str) -> PathBuf {
        self.root.join("gt").join(name)
    }
}

/// Writes `cameras.json`, `scene.json`, `images/####.png`,
/// `semantic/####.scgs` and the `gt/` meshes and body parameters.
pub fn write_bundle(bundle: &SceneBundle, dir: &Path) -> Result<()> {
    let layout = BundleLayout::new(dir);
    for sub in ["images", "semantic", "gt"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    save_cameras(&bundle.cameras, &layout.cameras())?;
    std::fs::write(layout.scene(), serde_json::to_string_pretty(&bundle.spec)?)?;
    for (i, (img, map)) in bundle.images.iter().zip(&bundle.semantic).enumerate() {
        img.save_png(&layout.image(i))?;
        map.save(&layout.semantic(i))?;
    }
    let t = &bundle.truth;
    save_mesh(&t.dressed, &layout.gt("dressed.ply"))?;
    if let Some(b) = &t.body {
        save_mesh(b, &layout.gt("body.ply"))?;
    }
    if let Some(m) = &t.upper {
        save_mesh(m, &layout.gt("garment_upper.ply"))?;
    }
    if let Some(m) = &t.lower {
        save_mesh(m, &layout.gt("garment_lower.ply"))?;
    }
    if let Some(p) = bundle.body_params() {
        p.save_json(&layout.gt("body_params.json"))?;
    }
    Ok(())
}

/// Cameras and images of a bundle directory, with semantic maps when present.
pub struct LoadedViews {
    pub cameras: Vec<Camera<f64>>,
    pub images: Vec<RgbImage<f64>>,
    pub semantic: Option<Vec<SemanticMap<f64>>>,
}

pub fn load_views(dir: &Path) -> Result<LoadedViews> {
    let layout = BundleLayout::new(dir);
    let cameras = load_cameras(&layout.cameras())?;
    let images = (0..cameras.len()).map(|i| RgbImage::load_png(&layout.image(i))).collect::<Result<Vec<_>>>()?;
    for (i, (c, img)) in cameras.iter().zip(&images).enumerate() {
        if c.width != img.width || c.height != img.height {
            return Err(Error::validation(format!("image {i} size differs from its camera")));
        }
    }
    let semantic = if layout.semantic(0).exists() {
        Some((0..cameras.len()).map(|i| SemanticMap::load(&layout.semantic(i))).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(LoadedViews { cameras, images, semantic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::OccupancyField;

    fn small(mut spec: SceneSpec) -> SceneSpec {
        spec.views = 4;
        spec.width = 40;
        spec.height = 40;
        spec.gt_resolution = 48;
        spec
    }

    #[test]
    fn torso_center_pixel_is_upper() {
        let spec = small(SceneSpec::dummy(0));
        let scene = AnalyticScene::new(&spec.kind);
        let body = dummy_body(0);
        let chest = crate::bodyfit::Pose::new(&body).position[2];
        let front = crate::bodyfit::Pose::new(&body).rotation[2].col(2);
        let cam = Camera::look_at(chest + front * 2.0, chest, Vec3::unit_y(), 60.0, 41, 41).unwrap();
        let (_, map) = render_view(&scene, &cam);
        assert_eq!(map.get(20, 20), Label::Upper.one_hot::<f64>());
        assert_eq!(map.get(0, 0), Label::NonClothing.one_hot::<f64>());
        assert!(map.data.iter().all(|c| c.iter().filter(|&&v| v == 1.0).count() == 1));
    }

    #[test]
    fn silhouettes_match_marched_oracle() {
        let spec = small(SceneSpec::dummy(1));
        let scene = AnalyticScene::new(&spec.kind);
        let (mut rendered, mut marched) = (0usize, 0usize);
        for cam in cameras(&spec).unwrap() {
            let (img, _) = render_view(&scene, &cam);
            rendered += img.data.iter().filter(|c| c.iter().any(|&v| v > 0.0)).count();
            for y in 0..cam.height {
                for x in 0..cam.width {
                    let dir = cam.direction(Camera::<f64>::pixel_center(x, y));
                    let mut t = 1.0;
                    while t < 3.0 {
                        if OccupancyField::<f64>::occupancy(&scene, cam.center() + dir * t) > 0.5 {
                            marched += 1;
                            break;
                        }
                        t += 5e-4;
                    }
                }
            }
        }
        let rel = (rendered as f64 - marched as f64).abs() / marched as f64;
        assert!(rel < 0.02, "{rendered} vs {marched}");
    }

    #[test]
    fn cameras_are_deterministic_and_in_band() {
        let spec = SceneSpec::sphere();
        let a = cameras(&spec).unwrap();
        let b = cameras(&spec).unwrap();
        assert_eq!(a.len(), 20);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.pose, q.pose);
            assert!((p.center().norm() - 2.0).abs() < 1e-12);
            assert!(p.center().y.abs() <= 2.0 * 60f64.to_radians().sin() + 1e-12);
            let (px, depth) = p.project(Vec3::zero());
            assert!(depth > 0.0 && p.in_image(px));
        }
    }

    #[test]
    fn garments_stay_outside_the_body() {
        let spec = small(SceneSpec::dummy(0));
        let bundle = generate(&spec).unwrap();
        let scene = bundle.scene();
        let t = &bundle.truth;
        for g in [t.upper.as_ref().unwrap(), t.lower.as_ref().unwrap()] {
            assert!(!g.faces.is_empty());
            assert!(g.vertices.iter().all(|&v| scene.body_distance(v) > 0.0));
        }
        assert!(t.dressed.is_closed() && t.body.as_ref().unwrap().is_closed());
    }

    #[test]
    fn bundle_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = generate(&small(SceneSpec::sphere())).unwrap();
        write_bundle(&bundle, dir.path()).unwrap();
        let views = load_views(dir.path()).unwrap();
        assert_eq!(views.cameras.len(), 4);
        for (a, b) in views.images.iter().zip(&bundle.images) {
            assert!(metrics::psnr(a, b).unwrap() > 45.0);
        }
        assert_eq!(views.semantic.unwrap(), bundle.semantic);
        assert!(dir.path().join("gt/dressed.ply").exists());
        assert!(!dir.path().join("gt/body.ply").exists());
    }
}
