use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ctrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrecon")).args(args).output().expect("spawn ctrecon")
}

fn ok(args: &[&str]) -> Output {
    let o = ctrecon(args);
    assert!(o.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read_json(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const GRID: [&str; 8] = ["--dims", "30", "30", "30", "--spacing-mm", "0.5", "--radius-mm", "5"];

fn pipeline_config(dir: &Path, mesh: &str, volume: &str) -> String {
    let cfg = serde_json::json!({
        "reference": {"mesh": mesh},
        "input": {"volume": volume},
        "segmentation": {"method": "otsu"},
        "registration": {"downsample_voxel": 1.0}
    });
    let path = p(dir, "pipeline.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = ctrecon(&["frobnicate"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn evaluate_identical_masks() {
    let dir = tempfile::tempdir().unwrap();
    let (vol, mask, out) = (p(dir.path(), "v.json"), p(dir.path(), "m.json"), p(dir.path(), "e.json"));
    let mut args = vec!["phantom", "--kind", "sphere", "--out", &vol, "--mask-out", &mask];
    args.extend_from_slice(&GRID);
    ok(&args);
    ok(&["evaluate", "--pred", &mask, "--reference", &mask, "--out", &out]);
    let v = read_json(&out);
    assert_eq!(v["dice"], 1.0);
    assert_eq!(v["jaccard"], 1.0);
    assert_eq!(v["counts"]["fp"], 0);
}

#[test]
fn subcommand_chain_equals_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, mesh) = (p(d, "vol.json"), p(d, "ref.ply"));
    let mut args = vec!["phantom", "--kind", "sphere", "--noise-sigma", "120", "--out", &vol, "--mesh-out", &mesh];
    args.extend_from_slice(&GRID);
    ok(&args);
    let (seg, refm, aligned, metrics) = (p(d, "seg.json"), p(d, "refmask.json"), p(d, "aligned.json"), p(d, "m.json"));
    ok(&["segment", "--input", &vol, "--method", "otsu", "--out", &seg]);
    ok(&["voxelize", "--mesh", &mesh, "--like", &vol, "--out", &refm]);
    ok(&["align", "--moving", &seg, "--reference", &refm, "--out", &aligned]);
    ok(&["evaluate", "--pred", &aligned, "--reference", &refm, "--out", &metrics]);

    let cfg = pipeline_config(d, &mesh, &vol);
    let report = p(d, "report.json");
    ok(&["run", "--config", &cfg, "--out", &report]);
    let r = &read_json(&report)[0];
    let m = read_json(&metrics);
    for k in ["sensitivity", "specificity", "precision", "dice", "jaccard", "volume_similarity", "counts", "foreground_fraction"] {
        assert_eq!(r[k], m[k], "{k}");
    }
    assert!(r["dice"].as_f64().unwrap() > 0.9);
}

#[test]
fn surface_chain_equals_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, mesh, gt) = (p(d, "vol.json"), p(d, "ref.ply"), p(d, "gt.json"));
    let mut args = vec!["phantom", "--kind", "sphere", "--out", &vol, "--mesh-out", &mesh, "--mask-out", &gt];
    args.extend_from_slice(&GRID);
    ok(&args);
    let (seg, refm, aligned) = (p(d, "seg.json"), p(d, "refmask.json"), p(d, "aligned.json"));
    ok(&["segment", "--input", &vol, "--method", "otsu", "--out", &seg]);
    ok(&["voxelize", "--mesh", &mesh, "--like", &vol, "--out", &refm]);
    ok(&["align", "--moving", &seg, "--reference", &refm, "--out", &aligned]);
    let (a_surf, r_surf, reg, metrics) = (p(d, "a.ply"), p(d, "r.ply"), p(d, "reg.json"), p(d, "m.json"));
    ok(&["extract", "--mask", &aligned, "--out", &a_surf]);
    ok(&["extract", "--mask", &refm, "--out", &r_surf]);
    ok(&["register", "--source", &a_surf, "--target", &r_surf, "--voxel", "1.0", "--out", &reg]);
    ok(&[
        "evaluate", "--pred", &aligned, "--reference", &refm, "--pred-mesh", &a_surf, "--reference-mesh", &r_surf,
        "--registration", &reg, "--out", &metrics,
    ]);
    let cfg = pipeline_config(d, &mesh, &vol);
    let report = p(d, "report.json");
    ok(&["run", "--config", &cfg, "--out", &report]);
    let r = &read_json(&report)[0];
    let m = read_json(&metrics);
    for k in ["chamfer_sq_mm2", "chamfer_mm", "ahd_mm", "rmse_mm", "dice"] {
        assert_eq!(r[k], m[k], "{k}");
    }
    let g = read_json(&reg);
    assert_eq!(r["registration"]["transform"], g["transform"]);
    assert_eq!(r["registration"]["icp"], g["icp"]);
}

#[test]
fn missing_input_is_a_one_line_stage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = pipeline_config(d, &p(d, "nope.stl"), &p(d, "nope.json"));
    let report = p(d, "report.json");
    let o = ctrecon(&["run", "--config", &cfg, "--out", &report]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["stage"], "config");
    assert_eq!(v["command"], "run");
    assert!(v["error"].as_str().unwrap().contains("nope.stl"));
    assert!(!Path::new(&report).exists());
}

#[test]
fn strict_config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = p(d, "bad.json");
    std::fs::write(
        &path,
        r#"{"reference": {"mesh": "a.stl"}, "input": {"volume": "v.json"}, "segmentation": {"method": "otsu"},
            "registration": {"downsample_voxel": 1.0}, "typo_key": 3}"#,
    )
    .unwrap();
    let o = ctrecon(&["run", "--config", &path]);
    assert!(!o.status.success());
    let v: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert!(v["error"].as_str().unwrap().contains("typo_key"));
}

#[test]
fn reports_are_deterministic_and_csv_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (vol, mesh) = (p(d, "vol.json"), p(d, "ref.ply"));
    let mut args = vec!["phantom", "--kind", "sphere", "--noise-sigma", "100", "--out", &vol, "--mesh-out", &mesh];
    args.extend_from_slice(&GRID);
    ok(&args);
    let cfg = pipeline_config(d, &mesh, &vol);
    let a = p(d, "a.json");
    let strip = |path: &str| {
        let mut v = read_json(path);
        v[0].as_object_mut().unwrap().remove("timing_ms");
        v.to_string()
    };
    ok(&["run", "--config", &cfg, "--out", &a, "--seed", "3"]);
    let first = strip(&a);
    ok(&["run", "--config", &cfg, "--out", &a, "--seed", "3"]);
    assert_eq!(first, strip(&a));
    assert_eq!(read_json(&a)[0]["config"]["registration"]["ransac"]["seed"], 3);

    let c = p(d, "c.csv");
    let dump = p(d, "dump");
    ok(&["run", "--config", &cfg, "--out", &c, "--format", "csv", "--dump-intermediates", &dump]);
    let mut rdr = csv::Reader::from_path(&c).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.len(), ctrecon::io::CSV_COLUMNS.len());
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].len(), header.len());
    assert!(Path::new(&dump).join("aligned_mask.raw").exists());
}

#[test]
fn segment_requires_a_method() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let vol = p(d, "v.json");
    let mut args = vec!["phantom", "--kind", "sphere", "--out", &vol];
    args.extend_from_slice(&GRID);
    ok(&args);
    let o = ctrecon(&["segment", "--input", &vol, "--out", &p(d, "m.json")]);
    assert!(!o.status.success());
    let v: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(v["command"], "segment");
}

#[test]
fn truncated_volume_reports_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let vol = p(d, "v.json");
    let mut args = vec!["phantom", "--kind", "sphere", "--out", &vol];
    args.extend_from_slice(&GRID);
    ok(&args);
    let raw = d.join("v.raw");
    let bytes = std::fs::read(&raw).unwrap();
    std::fs::write(&raw, &bytes[..bytes.len() - 2]).unwrap();
    let o = ctrecon(&["segment", "--input", &vol, "--method", "otsu", "--out", &p(d, "m.json")]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("54000") && err.contains("53998"), "{err}");
}
