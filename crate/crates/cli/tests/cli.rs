use std::path::Path;
use std::process::{Command, Output};

fn clothsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clothsep")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_field_file_reports_file_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let out = clothsep(&[
        "extract",
        "--field",
        p(&dir.path().join("nope.gsnf")),
        "--scene",
        p(dir.path()),
        "--out",
        p(&dir.path().join("m.ply")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.starts_with("ERROR FILE_NOT_FOUND: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = clothsep(&["smooth", "--rounds", "many"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("ERROR USAGE: "));
    let out = clothsep(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_json_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, "{\"views\": ").unwrap();
    let out = clothsep(&["synth", "--spec", p(&spec), "--out", p(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("ERROR JSON: "), "{}", stderr(&out));
}

#[test]
fn smooth_with_zero_rounds_keeps_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("in.ply");
    let strip = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                 element face 2\nproperty list uchar int vertex_indices\nend_header\n\
                 0 0 0\n1 0.1 0\n0 1 0.2\n1 1 -0.1\n3 0 1 2\n3 2 1 3\n";
    std::fs::write(&mesh, strip).unwrap();
    let (a, b) = (dir.path().join("a.ply"), dir.path().join("b.ply"));
    assert!(clothsep(&["smooth", "--mesh", p(&mesh), "--rounds", "0", "--out", p(&a)]).status.success());
    assert!(clothsep(&["smooth", "--mesh", p(&a), "--rounds", "0", "--out", p(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let moved = dir.path().join("c.ply");
    assert!(clothsep(&["smooth", "--mesh", p(&mesh), "--rounds", "2", "--out", p(&moved)]).status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&moved).unwrap());
}

#[test]
fn synth_writes_a_bundle_and_eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("sphere");
    let out = clothsep(&["synth", "--kind", "sphere", "--views", "3", "--width", "24", "--height", "24", "--out", p(&bundle)]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["cameras.json", "scene.json", "images/0002.png", "semantic/0000.scgs", "gt/dressed.ply"] {
        assert!(bundle.join(f).exists(), "{f}");
    }
    let gt = bundle.join("gt/dressed.ply");
    let report = dir.path().join("report.json");
    let out = clothsep(&[
        "eval",
        "--pred",
        p(&gt),
        "--gt",
        p(&gt),
        "--images-pred",
        p(&bundle.join("images")),
        "--images-gt",
        p(&bundle.join("images")),
        "--samples",
        "2000",
        "--out",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["psnr"].as_f64(), Some(99.0));
    assert!((v["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(v["chamfer"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["images"].as_u64(), Some(3));
}

#[test]
fn retarget_needs_the_registration_body() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("body.json");
    std::fs::write(&params, serde_json::to_string(&clothsep::bodyfit::BodyParams::t_pose()).unwrap()).unwrap();
    let body = dir.path().join("body.ply");
    let out = clothsep(&["bodymesh", "--params", p(&params), "--out", p(&body)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let offsets = dir.path().join("offsets.json");
    assert!(clothsep(&["register", "--garment", p(&body), "--body", p(&body), "--out", p(&offsets)]).status.success());
    let out = clothsep(&["retarget", "--offsets", p(&offsets), "--garment", p(&body), "--body", p(&body), "--out", p(&dir.path().join("g.ply"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("--from-body"));
}
