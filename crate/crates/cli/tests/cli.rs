use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SCENE: &str = r#"
texture = "procedural"
seed = 3
focal = 120.0
width = 96
height = 64
gamma = 1.0
v = [0.3, 0.1, 0.05]
omega = [0.002, -0.003, 0.004]
[depth_ramp]
z0 = 5.0
dz_dx = 0.1
"#;

fn unroll(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unroll"))
        .args(args)
        .env("UNROLL_THREADS", "2")
        .output()
        .expect("spawn unroll")
}

fn ok(args: &[&str]) -> String {
    let out = unroll(args);
    assert!(
        out.status.success(),
        "unroll {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, config: &str, extra: &[&str]) -> std::path::PathBuf {
    let cfg = dir.join("scene.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("sim");
    let mut args = vec!["simulate", "--config", p(&cfg), "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_complete_manifest() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SCENE, &[]);
    let m = manifest(&sim);
    assert_eq!(m["rs_frames"].as_array().unwrap().len(), 2);
    assert_eq!(m["flows"].as_array().unwrap().len(), 2);
    assert_eq!(m["depths"].as_array().unwrap().len(), 2);
    assert_eq!(m["scene"]["gamma"].as_f64(), Some(1.0));
    for key in ["rs_frames", "flows", "depths"] {
        for name in m[key].as_array().unwrap() {
            assert!(sim.join(name.as_str().unwrap()).exists(), "{name} listed but missing");
        }
    }
}

#[test]
fn static_camera_rs_equals_gs() {
    let tmp = TempDir::new().unwrap();
    let cfg = SCENE
        .replace("v = [0.3, 0.1, 0.05]", "v = [0.0, 0.0, 0.0]")
        .replace("omega = [0.002, -0.003, 0.004]", "omega = [0.0, 0.0, 0.0]");
    let sim = simulate(tmp.path(), &cfg, &["--scanlines", "0"]);
    let rs = std::fs::read(sim.join("rs_1.png")).unwrap();
    let gs = std::fs::read(sim.join("gs_1_0000.00.png")).unwrap();
    assert_eq!(rs, gs);
}

#[test]
fn invert_then_eval_round_trip() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SCENE, &["--scanline-count", "9"]);
    let inv = tmp.path().join("inv");
    ok(&["invert", "--input", p(&sim), "--gamma", "1", "--depth", "gt", "--scanline-count", "9", "--out", p(&inv)]);
    let m = manifest(&inv);
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 18);
    for entry in outputs {
        assert!(inv.join(entry["image"].as_str().unwrap()).exists());
        assert!(inv.join(entry["mask"].as_str().unwrap()).exists());
    }

    let with = tmp.path().join("with.json");
    let without = tmp.path().join("without.json");
    ok(&["eval", "--pred", p(&inv), "--gt", p(&sim), "--report", p(&with)]);
    ok(&["eval", "--pred", p(&inv), "--gt", p(&sim), "--mask", "without", "--report", p(&without)]);
    let with: Value = serde_json::from_str(&std::fs::read_to_string(with).unwrap()).unwrap();
    let without: Value = serde_json::from_str(&std::fs::read_to_string(without).unwrap()).unwrap();
    let (pm, pu) = (with["mean_psnr"].as_f64().unwrap(), without["mean_psnr"].as_f64().unwrap());
    assert!(pm >= pu, "masked {pm} < unmasked {pu}");
    assert!(pm > 35.0, "masked PSNR {pm}");

    let out = unroll(&["eval", "--pred", p(&inv), "--gt", p(&sim), "--min-psnr", "200"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_of_identical_frames_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SCENE, &[]);
    let report = tmp.path().join("r.json");
    ok(&["eval", "--pred", p(&sim), "--gt", p(&sim), "--mask", "without", "--report", p(&report)]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["mean_psnr"].as_f64(), Some(99.0));
    assert_eq!(r["mean_ssim"].as_f64(), Some(1.0));
}

#[test]
fn zero_acceleration_matches_velocity_bitwise() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SCENE, &[]);
    let vel = tmp.path().join("vel");
    let acc = tmp.path().join("acc");
    let common = ["invert", "--input", p(&sim), "--gamma", "1", "--scanlines", "0,17.5,63"];
    let mut a = common.to_vec();
    a.extend(["--out", p(&vel)]);
    ok(&a);
    let mut b = common.to_vec();
    b.extend(["--model", "acceleration", "--phi", "0", "--out", p(&acc)]);
    ok(&b);
    for entry in manifest(&vel)["outputs"].as_array().unwrap() {
        for key in ["image", "mask"] {
            let name = entry[key].as_str().unwrap();
            assert_eq!(std::fs::read(vel.join(name)).unwrap(), std::fs::read(acc.join(name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SCENE, &[]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&["invert", "--input", p(&sim), "--gamma", "1", "--flow", "lk", "--out", p(out)]);
    }
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn error_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(unroll(&["simulate", "--config", p(&missing), "--out", p(tmp.path())]).status.code(), Some(2));

    let sim = simulate(tmp.path(), SCENE, &[]);
    let out = tmp.path().join("x");
    let r = unroll(&["invert", "--input", p(&sim), "--gamma", "1", "--scanlines", "64", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2), "scanline past the last row");
    let r = unroll(&["invert", "--input", p(&sim), "--gamma", "1.5", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2), "gamma outside (0, 1]");

    // Fitting needs reference frames.
    let r = unroll(&[
        "invert", "--rs1", p(&sim.join("rs_1.png")), "--rs2", p(&sim.join("rs_2.png")), "--flow", "lk",
        "--gamma", "1", "--model", "acceleration", "--fit", "--out", p(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("reference"));

    // Frame sets must match.
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    std::fs::copy(sim.join("gs_1_0000.00.png"), empty.join("gs_1_0000.00.png")).unwrap();
    let r = unroll(&["eval", "--pred", p(&empty), "--gt", p(&sim)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn selfcheck_passes() {
    let stdout = ok(&["selfcheck"]);
    assert_eq!(stdout.lines().filter(|l| l.contains("PASS")).count(), 4, "{stdout}");
}
