use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nerfsim::config::parse_config;
use nerfsim::output::read_csv_rows;
use nerfsim::validate::STANDARD_CONFIG;
use nerfsim_core::profile::Dataflow;
use nerfsim_core::scheduler::read_jsonl;
use nerfsim_core::volume::read_float_dump;
use serde_json::{json, Value};
use tempfile::TempDir;

const SCENE: &str = include_str!("../../../configs/standard_scene.json");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nerfsim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn standard_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.json")
}

/// A temp dir holding `scene.json` and `config.json`; the config is the
/// standard one shrunk to `size` pixels and then passed through `edit`.
fn setup(size: u32, scene: Value, edit: impl FnOnce(&mut Value)) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.json"), serde_json::to_string_pretty(&scene).unwrap()).unwrap();
    let mut c: Value = serde_json::from_str(STANDARD_CONFIG).unwrap();
    c["scene"] = json!("scene.json");
    c["rig"]["novel"]["image_width"] = json!(size);
    c["rig"]["novel"]["image_height"] = json!(size);
    c["rig"]["sources"]["ring"]["image_width"] = json!(size);
    c["rig"]["sources"]["ring"]["image_height"] = json!(size);
    c["features"]["height"] = json!(size);
    c["features"]["width"] = json!(size);
    c["scheduler"]["focused_bins"] = json!(16);
    c["scheduler"]["candidates"] = json!([{ "dh": 4, "dw": 4, "dd": 4 }, { "dh": 8, "dw": 2, "dd": 4 }]);
    edit(&mut c);
    let path = dir.path().join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    (dir, path)
}

fn standard_scene() -> Value {
    serde_json::from_str(SCENE).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_config_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"version\": 1,\n  \"scene\": \"s.json\",\n  oops\n}").unwrap();
    let o = run(&["render", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.json:4:"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2_with_line() {
    let (_d, p) = setup(8, standard_scene(), |c| c["sampling"]["n_fcused"] = json!(3));
    let o = run(&["render", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("n_fcused") && err.contains("config.json:"), "{err}");
}

#[test]
fn semantic_error_names_its_line() {
    let (_d, p) = setup(8, standard_scene(), |c| c["depth_range"] = json!([3.0, 1.0]));
    let o = run(&["render", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let text = fs::read_to_string(&p).unwrap();
    let line = text.lines().position(|l| l.contains("\"depth_range\"")).unwrap() + 1;
    assert!(stderr(&o).contains(&format!("config.json:{line}:")), "{}", stderr(&o));
}

#[test]
fn bad_dataflow_is_a_usage_error() {
    let o = run(&["profile", "--config", standard_path().to_str().unwrap(), "--dataflow", "var9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_capacity_exits_4() {
    let (d, p) = setup(8, standard_scene(), |c| c["hardware"]["prefetch"]["capacity_bytes"] = json!(64));
    let o = run(&["partition", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("anchor") || stderr(&o).contains("capacity"), "{}", stderr(&o));
    assert!(!d.path().join("out/patches.jsonl").exists());
}

#[test]
fn render_is_deterministic_across_runs_and_workers() {
    let (d, p) = setup(24, standard_scene(), |_| {});
    let cfg = p.to_str().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    let c = d.path().join("c");
    assert!(run(&["render", "--config", cfg, "--out", a.to_str().unwrap()]).status.success());
    let o = bin().env("NERFSIM_WORKERS", "1").args(["render", "--config", cfg, "--out", b.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success());
    assert!(run(&["render", "--config", cfg, "--seed", "5", "--out", c.to_str().unwrap()]).status.success());
    let dump = |dir: &Path| fs::read(dir.join("render.f32")).unwrap();
    assert_eq!(dump(&a), dump(&b));
    assert_ne!(dump(&a), dump(&c));
    assert_eq!(fs::read(a.join("render.ppm")).unwrap(), fs::read(b.join("render.ppm")).unwrap());
}

#[test]
fn empty_scene_renders_background() {
    let (d, p) = setup(16, json!({ "primitives": [], "background": [1.0, 1.0, 1.0] }), |_| {});
    assert!(run(&["render", "--config", p.to_str().unwrap()]).status.success());
    let img = read_float_dump(fs::File::open(d.path().join("out/render.f32")).unwrap()).unwrap();
    assert_eq!((img.height, img.width), (16, 16));
    for r in 0..16 {
        for c in 0..16 {
            assert_eq!(img.pixel(r, c), [1.0; 3]);
        }
    }
}

#[test]
fn sphere_render_tracks_reference() {
    let scene = json!({
        "primitives": [{ "shape": { "type": "sphere", "center": [0.0, 0.0, 0.0], "radius": 0.8 }, "density": 3.0, "color": [0.85, 0.25, 0.2] }],
        "background": [1.0, 1.0, 1.0]
    });
    let (d, p) = setup(64, scene, |c| c["reference_points"] = json!(1024));
    let o = run(&["render", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    let err = summary["mean_abs_error_vs_reference"].as_f64().unwrap();
    assert!(err < 0.02, "mean abs error {err}");
    let a = read_float_dump(fs::File::open(d.path().join("out/render.f32")).unwrap()).unwrap();
    let b = read_float_dump(fs::File::open(d.path().join("out/reference.f32")).unwrap()).unwrap();
    assert!((a.mean_abs_error(&b).unwrap() - err).abs() < 1e-6);
    let flops: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/flops.json")).unwrap()).unwrap();
    assert_eq!(flops["pixels"], json!(64 * 64));
}

#[test]
fn partition_small_cube_single_candidate() {
    let (d, p) = setup(4, standard_scene(), |c| {
        c["scheduler"]["focused_bins"] = json!(4);
        c["scheduler"]["candidates"] = json!([{ "dh": 2, "dw": 2, "dd": 2 }]);
    });
    let o = run(&["partition", "--config", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("out/patches.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 8);
    let patches = read_jsonl(text.as_bytes()).unwrap();
    let mut hits = [0u8; 64];
    for q in &patches {
        assert!(q.bytes() <= 262_144);
        for h in q.anchor.0..q.anchor.0 + q.shape.dh {
            for w in q.anchor.1..q.anchor.1 + q.shape.dw {
                for z in q.anchor.2..q.anchor.2 + q.shape.dd {
                    hits[(h * 4 + w) * 4 + z] += 1;
                }
            }
        }
    }
    assert!(hits.iter().all(|&h| h == 1));
}

#[test]
fn standard_profile_gen_beats_var1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "profile",
        "--config",
        standard_path().to_str().unwrap(),
        "--dataflow",
        "gen,var1",
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv_rows(&o.stdout[..]).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].dataflow, rows[1].dataflow), (Dataflow::Gen, Dataflow::Var1));
    assert!(rows[0].fps > 0.0);
    assert!(rows[0].exposed_share < rows[1].exposed_share);
    let file = read_csv_rows(fs::File::open(dir.path().join("summary.csv")).unwrap()).unwrap();
    assert_eq!(file, rows);
    let trace: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_emits_one_row_per_view_count() {
    let (d, p) = setup(16, standard_scene(), |_| {});
    let o = run(&["sweep", "--config", p.to_str().unwrap(), "--views", "4,6,8,10", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv_rows(fs::File::open(d.path().join("out/summary.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.views).collect::<Vec<_>>(), [4, 6, 8, 10]);
    for s in [4, 6, 8, 10] {
        assert!(d.path().join(format!("out/s{s}/trace.json")).exists());
    }
}

#[test]
fn validate_passes_and_names_every_check() {
    let o = run(&["validate"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{out}");
    for (name, _) in nerfsim::validate::CHECKS {
        assert!(out.contains(name), "missing {name}");
    }
}

#[test]
fn injected_interleave_fault_is_caught() {
    let o = run(&["validate", "--inject-fault", "interleave"]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().any(|l| l.starts_with("FAIL") && l.contains("balance-optimality")), "{out}");
    assert!(stderr(&o).contains("balance-optimality"));
}

#[test]
fn config_round_trips() {
    let c = parse_config(STANDARD_CONFIG, Path::new("standard.json")).unwrap();
    let again = parse_config(&serde_json::to_string_pretty(&c).unwrap(), Path::new("x.json")).unwrap();
    assert_eq!(c, again);
}
