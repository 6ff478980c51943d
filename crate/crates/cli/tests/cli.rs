use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gpmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmap")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a square room world and a run config pointing at it.
fn room(dir: &Path) -> PathBuf {
    let world = json!({"polygons": [{"role": "outer", "points": [[-5, -5], [5, -5], [5, 5], [-5, 5]]}]});
    fs::write(dir.join("world.json"), world.to_string()).unwrap();
    let cfg = json!({
        "world": dir.join("world.json"),
        "waypoints": [[-3, -3], [3, -3], [3, 3], [-3, 3], [-3, -3]],
        "seed": 3,
        "output": dir.join("out"),
    });
    let path = dir.join("run.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn simulate(dir: &Path) -> PathBuf {
    let cfg = room(dir);
    let out = gpmap(&["simulate", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("scans with seed 3"), "{text}");
    dir.join("out")
}

#[test]
fn missing_world_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = room(dir.path());
    let out = gpmap(&["simulate", "--config", s(&cfg), "--world", "/nonexistent/world.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("world.json"));
}

#[test]
fn bad_config_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = room(dir.path());
    let out = gpmap(&["simulate", "--config", s(&cfg), "--n-min", "80"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, ob) = (simulate(a.path()), simulate(b.path()));
    for f in ["scans.jsonl", "gt.sdf"] {
        let x = fs::read(oa.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(ob.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn stats_rows_match_used_scans() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path());
    let log = out.join("scans.jsonl");
    let n = fs::read_to_string(&log).unwrap().lines().count();
    for stride in [7usize, 100] {
        let mdir = dir.path().join(format!("map{stride}"));
        let o = gpmap(&["map", s(&log), "--stride", &stride.to_string(), "--output", s(&mdir)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stats = fs::read_to_string(mdir.join("stats.csv")).unwrap();
        let mut lines = stats.lines();
        assert_eq!(lines.next().unwrap(), "scan_index,n_experts,n_pi_total,n_pi_primary,wall_ms");
        assert_eq!(lines.count(), n.div_ceil(stride), "stride {stride}");
        assert!(mdir.join("model.json").exists());
    }
}

#[test]
fn one_scan_log_gives_one_expert() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path());
    let first = fs::read_to_string(out.join("scans.jsonl")).unwrap().lines().next().unwrap().to_string();
    let log = dir.path().join("one.jsonl");
    fs::write(&log, first + "\n").unwrap();
    let mdir = dir.path().join("m");
    let o = gpmap(&["map", s(&log), "--output", s(&mdir)]);
    assert!(o.status.success());
    let model: Value = serde_json::from_str(&fs::read_to_string(mdir.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["experts"].as_array().unwrap().len(), 1);
}

#[test]
fn map_then_eval_reports_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path());
    let mdir = dir.path().join("m");
    assert!(gpmap(&["map", s(&out.join("scans.jsonl")), "--output", s(&mdir)]).status.success());
    let o = gpmap(&["eval", s(&mdir.join("model.json")), s(&out.join("gt.sdf")), "--mode", "both", "--output", s(&mdir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(mdir.join("metrics.json")).unwrap()).unwrap();
    for key in ["individual", "mixture"] {
        assert!(report[key]["rmsd"].as_f64().is_some(), "{report}");
        assert!(report[key].get("hausdorff").is_some());
    }
    assert!(report["n_pi_total"].as_u64().unwrap() >= report["n_pi_primary"].as_u64().unwrap());
    assert!(report["n_experts"].as_u64().unwrap() >= 1);
}

#[test]
fn eval_grid_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path());
    let mdir = dir.path().join("m");
    assert!(gpmap(&["map", s(&out.join("scans.jsonl")), "--output", s(&mdir)]).status.success());
    let cfg = dir.path().join("grid.json");
    let grid = json!({"grid": {"origin": [0.0, 0.0], "resolution": 0.1, "width": 2, "height": 1}});
    fs::write(&cfg, grid.to_string()).unwrap();
    let (model, gt) = (mdir.join("model.json"), out.join("gt.sdf"));
    let args = ["eval", s(&model), s(&gt), "--output", s(&mdir)];
    assert!(gpmap(&args).status.success());
    let o = gpmap(&[&args[..], &["--config", s(&cfg)]].concat());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
}

/// One PI with mean 1: predictions stay well above the surface band.
fn offset_model(path: &Path) {
    let model = json!({
        "config": {},
        "scan_counter": 1,
        "next_id": 1,
        "experts": [{
            "id": 0, "pis": [[0.0, 0.0]], "primary_count": 1, "mean": [1.0],
            "cov": [0.01], "secondary_origin": [], "jitter": 0.0
        }]
    });
    fs::write(path, model.to_string()).unwrap();
}

#[test]
fn model_without_surface_gives_null_rmsd() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    offset_model(&model);
    let gt = dir.path().join("gt.sdf");
    fs::write(&gt, "-1 -1 0.5 4 4\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    let o = gpmap(&["eval", s(&model), s(&gt), "--output", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["rmsd"].is_null());
    assert!(report["hausdorff"].is_null());
    assert_eq!(report["n_pi_total"], 1);
}

#[test]
fn zero_grid_renders_white() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("z.sdf");
    fs::write(&grid, "0 0 0.1 3 2\n0 0 0\n0 0 0\n").unwrap();
    let img = dir.path().join("z.ppm");
    let o = gpmap(&["render", s(&grid), s(&img)]);
    assert!(o.status.success());
    let bytes = fs::read(&img).unwrap();
    let header = b"P6 3 2 255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 18);
    assert!(bytes[header.len()..].iter().all(|b| *b == 255));
}

#[test]
fn overlay_draws_one_dot_per_primary_pi() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path());
    let mdir = dir.path().join("m");
    assert!(gpmap(&["map", s(&out.join("scans.jsonl")), "--output", s(&mdir)]).status.success());
    let model_path = mdir.join("model.json");
    let model: Value = serde_json::from_str(&fs::read_to_string(&model_path).unwrap()).unwrap();
    let primaries: u64 = model["experts"].as_array().unwrap().iter().map(|e| e["primary_count"].as_u64().unwrap()).sum();
    let img = dir.path().join("m.ppm");
    let o = gpmap(&["render", s(&model_path), s(&img), "--overlay", "--grid", s(&out.join("gt.sdf"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains(&format!("drew {primaries} PI dots")), "{text}");
    let plain = dir.path().join("p.ppm");
    assert!(gpmap(&["render", s(&model_path), s(&plain), "--grid", s(&out.join("gt.sdf"))]).status.success());
    let (a, b) = (fs::read(&img).unwrap(), fs::read(&plain).unwrap());
    assert_eq!(a.len(), b.len());
    let changed = a.chunks(3).zip(b.chunks(3)).filter(|(x, y)| x != y).count() as u64;
    assert!(changed >= 1 && changed <= primaries);
}

#[test]
fn render_mode_both_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    offset_model(&model);
    let o = gpmap(&["render", s(&model), s(&dir.path().join("x.ppm")), "--mode", "both"]);
    assert_eq!(o.status.code(), Some(2));
}
