use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clothsep::bodyfit::{fit, BodyParams, FitConfig, ProxyBody};
use clothsep::extract::{color_vertices, compute_normals, march, NormalMode, DEFAULT_ISO, DEFAULT_STANDOFF_CELLS};
use clothsep::field::{load_blob, save_blob, FeatureSampler, FieldParams, NeuralField};
use clothsep::finishing::{
    depenetrate, register_offsets, retarget, smooth_borders, OffsetMap, OffsetMode, DEFAULT_MARGIN, DEFAULT_ROUNDS,
};
use clothsep::geom::{load_mesh, save_mesh, Camera, GridSpec, Label, RgbImage, TriMesh};
use clothsep::render::{render_image, train, RenderConfig, TrainScene};
use clothsep::scgs::{extract_garment, fuse, visibility};
use clothsep::synth::{chamfer_eval, generate, load_views, psnr, ssim, write_bundle, SceneSpec};
use clothsep::Error;

use crate::config::{read_json, write_json, TrainJob};

#[derive(Debug, Parser)]
#[command(name = "clothsep", version, about = "Layered reconstruction of dressed people from posed images")]
pub struct Cli {
    /// Seed for every random stream; overrides seeds in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an analytic scene bundle.
    Synth(SynthArgs),
    /// Train a field on one or more scene bundles.
    Train(TrainArgs),
    /// Render one view of a scene with a trained field.
    Render(RenderArgs),
    /// Extract a colored mesh from a trained field.
    Extract(ExtractArgs),
    /// Label a mesh from the scene's semantic maps and split out the garments.
    Segment(SegmentArgs),
    /// Fit the proxy body inside a dressed mesh.
    Fitbody(FitbodyArgs),
    /// Smooth garment borders and push the garment out of the body.
    Smooth(SmoothArgs),
    /// Record garment vertices as offsets from a body.
    Register(RegisterArgs),
    /// Move a registered garment onto another body.
    Retarget(RetargetArgs),
    /// Write the proxy body mesh for a parameter file.
    Bodymesh(BodymeshArgs),
    /// Compare predictions with ground truth.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SceneChoice {
    Sphere,
    Dummy,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (JSON); without it a preset is used.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dummy")]
    pub kind: SceneChoice,
    /// Dummy preset variant.
    #[arg(long, default_value_t = 0)]
    pub variant: u64,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub scenes: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Checkpoint path; the loss log goes next to it as CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub view: usize,
    #[arg(long, default_value_t = 32)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.5)]
    pub half_extent: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormalChoice {
    Gradient,
    Neighbor,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub res: usize,
    #[arg(long, default_value_t = DEFAULT_ISO)]
    pub iso: f64,
    #[arg(long, default_value_t = 0.5)]
    pub half_extent: f64,
    #[arg(long, value_enum, default_value = "gradient")]
    pub normals: NormalChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for `garment_upper.ply` and `garment_lower.ply`.
    #[arg(long)]
    pub garments: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitbodyArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Starting parameters (default: T-pose).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub beta_pen: Option<f64>,
    /// Fitted parameters; the body mesh and the fit log go next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    /// Body to push the garment out of.
    #[arg(long)]
    pub body: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub garment: PathBuf,
    #[arg(long)]
    pub body: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetargetArgs {
    #[arg(long)]
    pub offsets: PathBuf,
    #[arg(long)]
    pub garment: PathBuf,
    /// Target body.
    #[arg(long)]
    pub body: PathBuf,
    /// Body the offsets were registered on; needed unless `--raw`.
    #[arg(long)]
    pub from_body: Option<PathBuf>,
    /// Add offsets without rotating them into the new body's frames.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BodymeshArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub images_pred: Option<PathBuf>,
    #[arg(long)]
    pub images_gt: Option<PathBuf>,
    #[arg(long, default_value_t = 20000)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth_cmd(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Render(a) => render_cmd(a, seed),
        Command::Extract(a) => extract_cmd(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Fitbody(a) => fitbody_cmd(a, seed),
        Command::Smooth(a) => smooth_cmd(a),
        Command::Register(a) => register_cmd(a),
        Command::Retarget(a) => retarget_cmd(a),
        Command::Bodymesh(a) => bodymesh_cmd(a),
        Command::Eval(a) => eval_cmd(a, seed),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn read_mesh(path: &Path) -> Result<TriMesh<f64>> {
    load_mesh(path).with_context(|| format!("reading {}", path.display()))
}

fn write_mesh(mesh: &TriMesh<f64>, path: &Path) -> Result<()> {
    create_parent(path)?;
    save_mesh(mesh, path).with_context(|| format!("writing {}", path.display()))
}

fn synth_cmd(a: SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut spec: SceneSpec = match &a.spec {
        Some(p) => read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => match a.kind {
            SceneChoice::Sphere => SceneSpec::sphere(),
            SceneChoice::Dummy => SceneSpec::dummy(a.variant),
        },
    };
    if let Some(v) = a.views {
        spec.views = v;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    if let Some(s) = seed {
        spec.camera_seed = s;
    }
    let bundle = generate(&spec)?;
    write_bundle(&bundle, &a.out).with_context(|| format!("writing bundle {}", a.out.display()))?;
    Ok(())
}

/// Cameras, images and the feature sampler of a scene bundle, in `f32`.
struct Views {
    cameras: Vec<Camera<f32>>,
    images: Vec<RgbImage<f32>>,
}

fn load_views32(dir: &Path) -> Result<Views> {
    let v = load_views(dir).with_context(|| format!("reading scene {}", dir.display()))?;
    Ok(Views {
        cameras: v.cameras.iter().map(|c| c.cast()).collect(),
        images: v.images.iter().map(|i| i.cast()).collect(),
    })
}

fn features_for(params: &FieldParams<f32>, views: &Views) -> Result<FeatureSampler<f32>> {
    let dim = params.arch().feature_dim;
    if dim == 0 || dim % 3 != 0 {
        return Err(Error::Validation(format!("field expects {dim} feature channels, not a whole number of RGB levels")).into());
    }
    Ok(FeatureSampler::from_views(dim / 3, views.cameras.iter().cloned().zip(views.images.iter().cloned())))
}

fn load_field(path: &Path) -> Result<FieldParams<f32>> {
    load_blob(path).with_context(|| format!("reading field {}", path.display()))
}

fn train_cmd(a: TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut job: TrainJob = match &a.config {
        Some(p) => read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => TrainJob::default(),
    };
    if let Some(v) = a.epochs {
        job.train.epochs = v;
    }
    if let Some(v) = a.rays {
        job.train.rays_per_batch = v;
    }
    if let Some(v) = a.lambda {
        job.train.lambda = v;
    }
    if let Some(v) = a.lr {
        job.train.learning_rate = v;
    }
    if let Some(s) = seed {
        job.train.seed = s;
    }
    if job.feature_levels == 0 {
        return Err(Error::Validation("feature_levels must be at least 1".into()).into());
    }
    job.arch.feature_dim = 3 * job.feature_levels;
    let mut scenes = Vec::new();
    for dir in &a.scenes {
        let v = load_views32(dir)?;
        let scene = TrainScene::new(v.cameras.into_iter().zip(v.images).collect(), job.feature_levels, job.half_extent as f32)
            .with_context(|| format!("preparing scene {}", dir.display()))?;
        scenes.push(scene);
    }
    let mut rng = clothsep::rng::stream(job.train.seed, &[]);
    let params = FieldParams::<f32>::random(job.arch, &mut rng)?;
    let (params, log) = train(params, &scenes, &job.train)?;
    create_parent(&a.out)?;
    save_blob(&params, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    log.save_csv(&a.out.with_extension("csv"))?;
    Ok(())
}

fn render_cmd(a: RenderArgs, seed: Option<u64>) -> Result<()> {
    let params = load_field(&a.field)?;
    let views = load_views32(&a.scene)?;
    let cam = views
        .cameras
        .get(a.view)
        .ok_or_else(|| Error::Bounds(format!("view {} of {}", a.view, views.cameras.len())))?;
    let features = features_for(&params, &views)?;
    let field = NeuralField::new(&params, &features)?;
    let cfg = RenderConfig {
        n_coarse: a.samples,
        n_fine: a.samples,
        half_extent: a.half_extent,
        seed: seed.unwrap_or(0),
        ..RenderConfig::default()
    };
    let img = render_image(&field, cam, &cfg);
    create_parent(&a.out)?;
    img.save_png(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn extract_cmd(a: ExtractArgs) -> Result<()> {
    let params = load_field(&a.field)?;
    let views = load_views32(&a.scene)?;
    let features = features_for(&params, &views)?;
    let field = NeuralField::new(&params, &features)?;
    let grid = GridSpec::cube(a.res, a.half_extent as f32)?;
    let mesh = march(&field, grid, a.iso as f32)?;
    if mesh.faces.is_empty() {
        return Err(Error::Empty(format!("no surface at occupancy {}", a.iso)).into());
    }
    let mode = match a.normals {
        NormalChoice::Gradient => NormalMode::Gradient,
        NormalChoice::Neighbor => NormalMode::Neighbor,
    };
    let (mesh, _) = compute_normals(&mesh, &field, mode);
    let standoff = grid.cell_size().x * DEFAULT_STANDOFF_CELLS as f32;
    let mesh = color_vertices(&mesh, &field, standoff)?;
    write_mesh(&mesh.cast(), &a.out)
}

fn segment_cmd(a: SegmentArgs) -> Result<()> {
    let mesh = read_mesh(&a.mesh)?;
    let views = load_views(&a.scene).with_context(|| format!("reading scene {}", a.scene.display()))?;
    let maps = views.semantic.ok_or_else(|| Error::Validation(format!("scene {} has no semantic maps", a.scene.display())))?;
    let mask = visibility(&mesh, &views.cameras);
    let fused = fuse(&mesh, &views.cameras, &maps, &mask)?;
    write_mesh(&fused.mesh, &a.out)?;
    std::fs::create_dir_all(&a.garments).map_err(Error::from)?;
    for (name, label) in [("garment_upper.ply", Label::Upper), ("garment_lower.ply", Label::Lower)] {
        let part = extract_garment(&fused.mesh, &[label])?;
        write_mesh(&part.union, &a.garments.join(name))?;
    }
    Ok(())
}

fn fitbody_cmd(a: FitbodyArgs, seed: Option<u64>) -> Result<()> {
    let target = read_mesh(&a.mesh)?;
    let init = match &a.init {
        Some(p) => BodyParams::load_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => BodyParams::t_pose(),
    };
    let mut cfg: FitConfig = match &a.config {
        Some(p) => read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => FitConfig::default(),
    };
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.beta_pen {
        cfg.beta_pen = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let body = ProxyBody::standard();
    let result = fit(body, &target, &init, &cfg)?;
    create_parent(&a.out)?;
    result.params.save_json(&a.out)?;
    let (mesh, _) = body.mesh::<f64>(&result.params)?;
    write_mesh(&mesh, &a.out.with_extension("ply"))?;
    result.save_log(&a.out.with_extension("csv"))?;
    Ok(())
}

fn smooth_cmd(a: SmoothArgs) -> Result<()> {
    let garment = read_mesh(&a.mesh)?;
    let (mut out, _) = smooth_borders(&garment, a.rounds)?;
    if let Some(b) = &a.body {
        let body = read_mesh(b)?;
        let (pushed, report) = depenetrate(&out, &body, a.margin)?;
        if report.inside > 0 {
            return Err(Error::Numeric(format!("{} garment vertices remain inside the body", report.inside)).into());
        }
        out = pushed;
    }
    write_mesh(&out, &a.out)
}

fn register_cmd(a: RegisterArgs) -> Result<()> {
    let garment = read_mesh(&a.garment)?;
    let body = read_mesh(&a.body)?;
    let map = register_offsets(&garment, &body)?;
    create_parent(&a.out)?;
    map.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn retarget_cmd(a: RetargetArgs) -> Result<()> {
    let offsets = OffsetMap::<f64>::load(&a.offsets).with_context(|| format!("reading {}", a.offsets.display()))?;
    let garment = read_mesh(&a.garment)?;
    let body = read_mesh(&a.body)?;
    let (from, mode) = match (&a.from_body, a.raw) {
        (_, true) => (body.clone(), OffsetMode::Raw),
        (Some(p), false) => (read_mesh(p)?, OffsetMode::LocalFrame),
        (None, false) => {
            return Err(Error::Validation("--from-body is required unless --raw is given".into()).into());
        }
    };
    let moved = retarget(&offsets, &garment, &from, &body, mode)?;
    let (out, report) = depenetrate(&moved, &body, a.margin)?;
    if report.inside > 0 {
        return Err(Error::Numeric(format!("{} garment vertices remain inside the body", report.inside)).into());
    }
    write_mesh(&out, &a.out)
}

fn bodymesh_cmd(a: BodymeshArgs) -> Result<()> {
    let params = BodyParams::load_json(&a.params).with_context(|| format!("reading {}", a.params.display()))?;
    let (mesh, _) = ProxyBody::standard().mesh::<f64>(&params)?;
    write_mesh(&mesh, &a.out)
}

#[derive(Debug, Default, Serialize)]
struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    chamfer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ssim: Option<f64>,
    images: usize,
}

/// PNG file names present in both directories, sorted.
fn paired_images(a: &Path, b: &Path) -> Result<Vec<String>> {
    let list = |dir: &Path| -> Result<Vec<String>> {
        if !dir.exists() {
            return Err(Error::FileNotFound(dir.to_path_buf()).into());
        }
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(Error::from)? {
            let name = entry.map_err(Error::from)?.file_name().to_string_lossy().into_owned();
            if name.ends_with(".png") {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    };
    let other = list(b)?;
    Ok(list(a)?.into_iter().filter(|n| other.binary_search(n).is_ok()).collect())
}

fn eval_cmd(a: EvalArgs, seed: Option<u64>) -> Result<()> {
    let mut report = Report::default();
    match (&a.pred, &a.gt) {
        (Some(p), Some(g)) => {
            let (p, g) = (read_mesh(p)?, read_mesh(g)?);
            report.chamfer = Some(chamfer_eval(&p, &g, a.samples, seed.unwrap_or(0))?);
        }
        (None, None) => {}
        _ => return Err(Error::Validation("--pred and --gt go together".into()).into()),
    }
    match (&a.images_pred, &a.images_gt) {
        (Some(p), Some(g)) => {
            let names = paired_images(p, g)?;
            if names.is_empty() {
                return Err(Error::Empty("no image names in common".into()).into());
            }
            let (mut sp, mut ss) = (0.0, 0.0);
            for n in &names {
                let x = RgbImage::<f64>::load_png(&p.join(n))?;
                let y = RgbImage::<f64>::load_png(&g.join(n))?;
                sp += psnr(&x, &y)?;
                ss += ssim(&x, &y)?;
            }
            report.psnr = Some(sp / names.len() as f64);
            report.ssim = Some(ss / names.len() as f64);
            report.images = names.len();
        }
        (None, None) => {}
        _ => return Err(Error::Validation("--images-pred and --images-gt go together".into()).into()),
    }
    if report.chamfer.is_none() && report.psnr.is_none() {
        return Err(Error::Validation("nothing to evaluate".into()).into());
    }
    create_parent(&a.out)?;
    write_json(&report, &a.out)?;
    Ok(())
}
