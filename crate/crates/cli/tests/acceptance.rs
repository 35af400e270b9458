//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unroll_core::estimate::{estimate_motion_ls, estimate_motion_robust, estimate_phi, PhiSearch, RobustParams};
use unroll_core::geometry::{FlowKind, DepthMap};
use unroll_core::io;
use unroll_core::metrics::{psnr, ssim};
use unroll_core::pipeline::{evenly_spaced_scanlines, splat_weights, Inverter};
use unroll_core::scene::{Plane, Scene, Texture};
use unroll_core::selfcheck::{bounds_sweep, fixed_point, reductions, two_path, SelfcheckConfig};
use unroll_core::warp::{SplatConfig, Splatted, WeightMode};
use unroll_core::{CameraModel, Direction, FlowField, Image, MotionState, RsTiming};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn scene(v: [f64; 3], omega: [f64; 3], k: f64, gamma: f64) -> Scene {
    Scene::new(
        Texture::procedural(7),
        Plane {
            z0: 6.0,
            dz_dx: 0.15,
            dz_dy: 0.1,
        },
        CameraModel::centered(300.0, 320, 256).unwrap(),
        RsTiming::new(gamma).unwrap(),
        MotionState::new(Vector3::from(v), Vector3::from(omega), k).unwrap(),
        2,
    )
    .unwrap()
}

/// Constant-velocity scene used by the inversion criteria.
fn velocity_scene() -> Scene {
    scene([0.5, 0.2, 0.05], [0.002, -0.003, 0.004], 0.0, 1.0)
}

struct Prepared {
    scene: Scene,
    rs1: Image,
    rs2: Image,
    depth1: DepthMap,
    depth2: DepthMap,
    fwd: FlowField,
    bwd: FlowField,
}

fn prepare(scene: Scene) -> Prepared {
    let r1 = scene.compose_rs(1).unwrap();
    let r2 = scene.compose_rs(2).unwrap();
    let (fwd, bwd) = scene.gt_optical_flow().unwrap();
    Prepared {
        scene,
        rs1: r1.image,
        rs2: r2.image,
        depth1: r1.depth,
        depth2: r2.depth,
        fwd,
        bwd,
    }
}

/// Pixels that are both splatted and visible from the RS frame.
fn eval_mask(out: &Splatted, occluded: &[bool]) -> Vec<bool> {
    out.valid.iter().zip(occluded).map(|(v, o)| *v && !o).collect()
}

/// Renders both paths at `s` and scores them against the GT GS frames.
fn score_pair(p: &Prepared, inv: &Inverter, s: f64, phi: Option<f64>) -> [(f64, f64); 2] {
    let splat = SplatConfig::default();
    let w1 = splat_weights(WeightMode::InverseDepth, Some(&p.depth1), &p.rs1, &p.rs2, &p.fwd).unwrap();
    let w2 = splat_weights(WeightMode::InverseDepth, Some(&p.depth2), &p.rs2, &p.rs1, &p.bwd).unwrap();
    let mut out = [(0.0, 0.0); 2];
    for (k, (rs, dir, frame, w)) in [(&p.rs1, Direction::Forward, 1, &w1), (&p.rs2, Direction::Backward, 2, &w2)]
        .into_iter()
        .enumerate()
    {
        let gs = inv.render(rs, dir, s, phi, w.as_deref(), &splat).unwrap();
        let gt = p.scene.render_gs(frame, s).unwrap().image;
        let mask = eval_mask(&gs, &p.scene.gt_occlusion(frame, s));
        out[k] = (
            psnr(&gs.image, &gt, Some(&mask)).unwrap(),
            ssim(&gs.image, &gt, Some(&mask)).unwrap(),
        );
    }
    out
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn criterion_1() -> Outcome {
    let p = prepare(velocity_scene());
    let max_flow = p.fwd.max_magnitude().max(p.bwd.max_magnitude());
    let m = p.scene.camera.middle_scanline();
    let start = Instant::now();
    let scores = single_threaded(|| {
        let inv = Inverter::new(p.scene.camera, p.scene.timing, p.fwd.clone(), p.bwd.clone()).unwrap();
        score_pair(&p, &inv, m, None)
    });
    let elapsed = start.elapsed();
    let ok = max_flow >= 20.0
        && scores.iter().all(|(ps, ss)| *ps >= 35.0 && *ss >= 0.97)
        && elapsed <= Duration::from_secs(5);
    outcome(
        ok,
        format!(
            "max flow {max_flow:.1} px; fwd PSNR {:.2} dB SSIM {:.4}; bwd PSNR {:.2} dB SSIM {:.4}; {:.2}s single-threaded",
            scores[0].0,
            scores[0].1,
            scores[1].0,
            scores[1].1,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let p = prepare(velocity_scene());
    let start = Instant::now();
    let inv = Inverter::new(p.scene.camera, p.scene.timing, p.fwd.clone(), p.bwd.clone()).unwrap();
    let scanlines = evenly_spaced_scanlines(&p.scene.camera, 33);
    let curves: Vec<[(f64, f64); 2]> = scanlines.iter().map(|&s| score_pair(&p, &inv, s, None)).collect();
    let elapsed = start.elapsed();
    let mut min = f64::INFINITY;
    let mut max_drop = 0.0f64;
    for path in 0..2 {
        for (i, c) in curves.iter().enumerate() {
            min = min.min(c[path].0);
            if i > 0 {
                max_drop = max_drop.max(curves[i - 1][path].0 - c[path].0);
            }
        }
    }
    outcome(
        min >= 33.0 && max_drop <= 3.0 && elapsed <= Duration::from_secs(30),
        format!(
            "{} scanlines x 2 paths; min PSNR {min:.2} dB; max adjacent drop {max_drop:.2} dB; {:.2}s",
            scanlines.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (ok, detail) = bounds_sweep(&SelfcheckConfig::default(), unroll_core::geometry::correlation_factor);
    let elapsed = start.elapsed();
    outcome(ok && elapsed <= Duration::from_secs(20), format!("{detail}; {:.2}s", elapsed.as_secs_f64()))
}

fn criterion_4() -> Outcome {
    let (ok, detail) = reductions(&SelfcheckConfig::default());
    outcome(ok, detail)
}

fn criterion_5() -> Outcome {
    let (ok, detail) = fixed_point(&SelfcheckConfig::default());
    outcome(ok, detail)
}

fn criterion_6() -> Outcome {
    let (ok, detail) = two_path(&SelfcheckConfig::default());
    outcome(ok, detail)
}

fn rel(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn criterion_7() -> Outcome {
    let v = Vector3::new(0.4, -0.15, 0.08);
    let omega = Vector3::new(0.004, -0.006, 0.01);
    let p = prepare(scene([v.x, v.y, v.z], [omega.x, omega.y, omega.z], 0.0, 1.0));
    let cam = p.scene.camera;
    let ls = estimate_motion_ls(&p.fwd, &p.depth1, &cam, &p.scene.timing).unwrap();
    let ls_err = rel(&ls.v, &v).max(rel(&ls.omega, &omega));

    // Replace 30% of the vectors with gross outliers.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut noisy = p.fwd.clone();
    let mut injected = vec![false; noisy.data.len()];
    for (i, u) in noisy.data.iter_mut().enumerate() {
        if rng.random_bool(0.3) {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let mag = rng.random_range(3.0..30.0);
            *u += Vector2::new(angle.cos(), angle.sin()) * mag;
            injected[i] = true;
        }
    }
    let params = RobustParams {
        iterations: 300,
        inlier_threshold_px: 0.5,
        seed: 5,
    };
    let robust = estimate_motion_robust(&noisy, &p.depth1, &cam, &p.scene.timing, &params).unwrap();
    let robust_err = rel(&robust.fit.v, &v).max(rel(&robust.fit.omega, &omega));
    let n_out = injected.iter().filter(|x| **x).count();
    let excluded = injected.iter().zip(&robust.inliers).filter(|(o, i)| **o && !**i).count();
    let excluded_frac = excluded as f64 / n_out as f64;
    outcome(
        ls_err <= 1e-6 && robust_err <= 1e-3 && excluded_frac >= 0.95,
        format!(
            "LS rel err {ls_err:.1e} (residual {:.1e} px); robust rel err {robust_err:.1e} with {:.0}% outliers, {:.1}% excluded",
            ls.residual,
            100.0 * n_out as f64 / injected.len() as f64,
            100.0 * excluded_frac
        ),
    )
}

fn criterion_8() -> Outcome {
    let sc = scene([0.5, 0.2, 0.0], [0.0; 3], 0.5, 1.0);
    let cam = sc.camera;
    let m = cam.middle_scanline();
    let rs1 = sc.compose_rs(1).unwrap().image;
    let rs2 = sc.compose_rs(2).unwrap().image;
    // The closed-form flow relation assumes constant velocity, so the
    // middle-scanline undistortion flows come from the ray tracer.
    let u1m = sc.gt_undistortion_flow(1, m);
    let u2m = sc.gt_undistortion_flow(2, m);
    let ref1 = sc.render_gs(1, 0.0).unwrap().image;
    let ref2 = sc.render_gs(2, 0.0).unwrap().image;
    let splat = SplatConfig {
        weight_mode: WeightMode::Uniform,
        ..Default::default()
    };
    let (fit1, fit2) =
        estimate_phi(&rs1, &rs2, &u1m, &u2m, &cam, 0.0, &ref1, &ref2, &splat, &PhiSearch::default()).unwrap();

    let inv = Inverter::from_middle_flows(cam, sc.timing, u1m, u2m).unwrap();
    let occ = sc.gt_occlusion(1, 0.0);
    let acc = inv.render(&rs1, Direction::Forward, 0.0, Some(fit1.phi), None, &splat).unwrap();
    let vel = inv.render(&rs1, Direction::Forward, 0.0, None, None, &splat).unwrap();
    let mask: Vec<bool> = (0..occ.len()).map(|i| acc.valid[i] && vel.valid[i] && !occ[i]).collect();
    let p_acc = psnr(&acc.image, &ref1, Some(&mask)).unwrap();
    let p_vel = psnr(&vel.image, &ref1, Some(&mask)).unwrap();
    let phi_ok = (fit1.phi - 0.5).abs() <= 0.05;
    outcome(
        phi_ok && p_acc > p_vel,
        format!(
            "phi1 {:.4} (target 0.5 +/- 0.05: {}), phi2 {:.4}; first-scanline PSNR acceleration {p_acc:.2} dB vs velocity {p_vel:.2} dB",
            fit1.phi,
            if phi_ok { "ok" } else { "missed" },
            fit2.phi
        ),
    )
}

fn criterion_9() -> Outcome {
    let p = prepare(velocity_scene());
    let m = p.scene.camera.middle_scanline();
    let mut results = Vec::new();
    for g in [1.0, 0.8, 0.6] {
        let inv = Inverter::new(p.scene.camera, RsTiming::new(g).unwrap(), p.fwd.clone(), p.bwd.clone()).unwrap();
        let s = score_pair(&p, &inv, m, None);
        results.push((g, s[0].0, s[1].0));
    }
    let monotone = results.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].2 <= w[0].2);
    let text: Vec<String> = results
        .iter()
        .map(|(g, f, b)| format!("gamma' {g}: {f:.2}/{b:.2} dB"))
        .collect();
    outcome(monotone, text.join("; "))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let flow = FlowField::from_fn(37, 23, FlowKind::OpticalFlow, Direction::Forward, |_, _| {
        let u = rng.random_range(-40.0f32..40.0) as f64;
        let v = rng.random_range(-40.0f32..40.0) as f64;
        Some(Vector2::new(u, v))
    });
    let depth = DepthMap::from_values(37, 23, (0..37 * 23).map(|_| rng.random_range(0.5f32..90.0) as f64).collect()).unwrap();
    let fp = dir.path().join("f.flo");
    let dp = dir.path().join("d.pfm");
    io::write_flo(&fp, &flow).unwrap();
    io::write_pfm(&dp, &depth).unwrap();
    let flow_back = io::read_flo(&fp).unwrap();
    let depth_back = io::read_pfm(&dp).unwrap();
    let flo_ok = flow_back.data == flow.data && std::fs::read(&fp).unwrap() == io::encode_flo(&flow_back);
    let pfm_ok = depth_back.data == depth.data && std::fs::read(&dp).unwrap() == io::encode_pfm(&depth_back);

    let fx = fixtures();
    let rejected = [
        io::read_flo(&fx.join("bad_magic.flo")).is_err(),
        io::read_flo(&fx.join("truncated.flo")).is_err(),
        io::read_flo(&fx.join("short_header.flo")).is_err(),
        io::read_pfm(&fx.join("bad_magic.pfm")).is_err(),
        io::read_pfm(&fx.join("bad_size.pfm")).is_err(),
        io::read_pfm(&fx.join("truncated.pfm")).is_err(),
        io::read_pfm(&fx.join("color.pfm")).is_err(),
    ];
    let n_rej = rejected.iter().filter(|x| **x).count();
    outcome(
        flo_ok && pfm_ok && n_rej == rejected.len(),
        format!(
            ".flo round trip {}, PFM round trip {}, {n_rej}/{} corrupted fixtures rejected",
            if flo_ok { "bit-exact" } else { "MISMATCH" },
            if pfm_ok { "bit-exact" } else { "MISMATCH" },
            rejected.len()
        ),
    )
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_unroll")).arg("selfcheck").output().unwrap();
    let elapsed = start.elapsed();
    let code = out.status.code().unwrap_or(-1);
    outcome(
        code == 0 && elapsed <= Duration::from_secs(60),
        format!("exit code {code}; {:.2}s", elapsed.as_secs_f64()),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("round-trip inversion", criterion_1),
        ("arbitrary-scanline video", criterion_2),
        ("correlation bounds sweep", criterion_3),
        ("constant-velocity reductions", criterion_4),
        ("interpolation fixed point", criterion_5),
        ("two-path equivalence", criterion_6),
        ("motion recovery", criterion_7),
        ("acceleration fitting", criterion_8),
        ("readout ratio robustness", criterion_9),
        ("file round trips", criterion_10),
        ("selfcheck command", criterion_11),
    ];
    let filter: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.is_some_and(|f| f != i + 1) {
            continue;
        }
        let o = run();
        println!(
            "criterion {:>2} {:<30} {}  {}",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
