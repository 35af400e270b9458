//! Invariant suite run by `unroll selfcheck`: correlation bounds over random
//! motions, constant-velocity reductions, the interpolation fixed point and
//! agreement of the two undistortion-flow paths.

use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{
    correlation_factor, correlation_map_from_flow, correlation_map_from_geometry, correlation_map_with,
    interpolation_factor, motion_field, propagate, propagation_ratio, rs_flow_closed_form, scanline_time_weight,
    undistortion_factor, undistortion_flow_from_geometry, undistortion_from_flow, validate_correlation_bounds,
    CameraModel, CorrelationFn, DepthMap, Direction, FlowField, FlowKind, MotionState, RsTiming,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfcheckConfig {
    pub seed: u64,
    /// Random motions in the correlation bounds sweep.
    pub motions: usize,
    /// Random samples for the scalar reduction and fixed-point checks.
    pub samples: usize,
    /// Random scenes for the dense two-path check.
    pub scenes: usize,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            motions: 1000,
            samples: 100_000,
            scenes: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Runs every check with the library's correlation factor.
pub fn run_selfcheck(config: &SelfcheckConfig) -> Vec<CheckResult> {
    vec![
        timed("correlation bounds", || bounds_sweep(config, correlation_factor)),
        timed("k = 0 / phi = 0 reductions", || reductions(config)),
        timed("interpolation fixed point", || fixed_point(config)),
        timed("two-path undistortion", || two_path(config)),
    ]
}

/// Text table of the results.
pub fn format_report(results: &[CheckResult]) -> String {
    let mut out = format!("{:<30} {:<6} {:>9}  detail\n", "check", "result", "time");
    for r in results {
        out.push_str(&format!(
            "{:<30} {:<6} {:>8.2}s  {}\n",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.elapsed.as_secs_f64(),
            r.detail
        ));
    }
    out
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

struct RandomCase {
    camera: CameraModel,
    timing: RsTiming,
    v: Vector3<f64>,
    omega: Vector3<f64>,
    depth: DepthMap,
}

fn random_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    loop {
        let p = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm() <= 1.0 {
            return p * radius;
        }
    }
}

/// A random bounded motion: `|v| <= 1`, `|omega| <= 0.1`, gamma in (0, 1],
/// f in [100, 1000], h in {64, 480}, per-pixel depth in [1, 100]. Motions
/// breaking `|gamma pi_v| < h` somewhere are redrawn; returns the case and the
/// number of redraws.
fn random_case(rng: &mut ChaCha8Rng) -> (RandomCase, usize) {
    let mut redraws = 0;
    loop {
        let h = if rng.random_bool(0.5) { 64 } else { 480 };
        let w = h * 4 / 3;
        let camera = CameraModel::centered(rng.random_range(100.0..=1000.0), w, h).unwrap();
        let timing = RsTiming::new(1.0 - rng.random_range(0.0..1.0)).unwrap();
        let v = random_in_ball(rng, 1.0);
        let omega = random_in_ball(rng, 0.1);
        let depth = DepthMap::from_values(w, h, (0..w * h).map(|_| rng.random_range(1.0..=100.0)).collect()).unwrap();
        let bounded = (0..h).all(|row| {
            (0..w).all(|col| {
                let z = depth.get(col, row).unwrap();
                let pi = motion_field(&camera, &v, &omega, Vector2::new(col as f64, row as f64), z).unwrap();
                (timing.gamma() * pi.y).abs() < camera.h()
            })
        });
        if bounded {
            return (
                RandomCase {
                    camera,
                    timing,
                    v,
                    omega,
                    depth,
                },
                redraws,
            );
        }
        redraws += 1;
    }
}

/// Middle-scanline correlation maps of random motions, both directions,
/// checked against the sign and interval structure. `factor` is injectable so
/// a broken formula can be shown to fail.
pub fn bounds_sweep(config: &SelfcheckConfig, factor: CorrelationFn) -> (bool, String) {
    let outcomes: Vec<(usize, usize)> = (0..config.motions)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(i as u64));
            let (case, redraws) = random_case(&mut rng);
            let m = case.camera.middle_scanline();
            let mut violations = 0;
            for dir in [Direction::Forward, Direction::Backward] {
                let map = correlation_map_with(
                    factor,
                    &case.camera,
                    &case.v,
                    &case.omega,
                    &case.timing,
                    &case.depth,
                    m,
                    dir,
                )
                .expect("dimensions agree by construction");
                violations += validate_correlation_bounds(&map).map_or(usize::MAX / 4, |r| r.violations);
            }
            (violations, redraws)
        })
        .collect();
    let violations: usize = outcomes.iter().map(|o| o.0).sum();
    let redraws: usize = outcomes.iter().map(|o| o.1).sum();
    (
        violations == 0,
        format!("{} motions, {violations} violations ({redraws} redrawn)", config.motions),
    )
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

pub fn reductions(config: &SelfcheckConfig) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut worst = [0.0f64; 3];
    for _ in 0..config.samples {
        let h = rng.random_range(2..=1080usize);
        let camera = CameraModel::centered(500.0, 2, h).unwrap();
        let timing = RsTiming::new(1.0 - rng.random_range(0.0..1.0)).unwrap();
        let g = timing.gamma();
        let hf = camera.h();
        let s = rng.random_range(0.0..=hf - 1.0);
        let eta = rng.random_range(0..h) as f64;
        let frame = rng.random_range(1..=2u32);

        let lambda = scanline_time_weight(frame, s, &timing, &camera, 0.0).unwrap();
        let linear = (frame - 1) as f64 + g * s / hf;
        worst[0] = worst[0].max(rel_err(lambda, linear));

        for (dir, sign) in [(Direction::Forward, 1.0), (Direction::Backward, -1.0)] {
            let beta = undistortion_factor(s, eta, &timing, &camera, dir, 0.0).unwrap();
            worst[1] = worst[1].max(rel_err(beta, sign * g * (s - eta) / hf));
        }

        if (s - eta).abs() > 1e-6 {
            let s2 = rng.random_range(0.0..=hf - 1.0);
            let a = propagation_ratio(s, s2, eta, Some(0.0), hf);
            let b = (s2 - eta) / (s - eta);
            worst[2] = worst[2].max(rel_err(a, b));
        }
    }
    // Dense propagation with phi = 0 against the velocity path.
    let camera = CameraModel::centered(300.0, 32, 24).unwrap();
    let u = FlowField::from_fn(32, 24, FlowKind::UndistortionFlow { target_scanline: 12.0 }, Direction::Forward, |c, r| {
        Some(Vector2::new(c as f64 * 0.1 - 1.0, r as f64 * -0.07))
    });
    for s2 in [0.0, 5.5, 23.0] {
        let a = propagate(&u, s2, Some(0.0), &camera).unwrap();
        let b = propagate(&u, s2, None, &camera).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            worst[2] = worst[2].max(rel_err(x.x, y.x)).max(rel_err(x.y, y.y));
        }
    }
    let ok = worst.iter().all(|w| *w <= 1e-12);
    (
        ok,
        format!(
            "{} samples, max rel err lambda {:.1e}, beta {:.1e}, propagation {:.1e}",
            config.samples, worst[0], worst[1], worst[2]
        ),
    )
}

pub fn fixed_point(config: &SelfcheckConfig) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xf1f0);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < config.samples {
        let h = if rng.random_bool(0.5) { 64 } else { 480 };
        let camera = CameraModel::centered(rng.random_range(100.0..=1000.0), h * 4 / 3, h).unwrap();
        let timing = RsTiming::new(1.0 - rng.random_range(0.0..1.0)).unwrap();
        let v = random_in_ball(&mut rng, 1.0);
        let omega = random_in_ball(&mut rng, 0.1);
        let px = Vector2::new(
            rng.random_range(0.0..camera.width as f64),
            rng.random_range(0.0..camera.h()),
        );
        let z = rng.random_range(1.0..=100.0);
        let dir = if rng.random_bool(0.5) { Direction::Forward } else { Direction::Backward };
        let (dv, dw) = match dir {
            Direction::Forward => (v, omega),
            Direction::Backward => (-v, -omega),
        };
        let pi = motion_field(&camera, &dv, &dw, px, z).unwrap();
        // Stay clear of the singularity guard.
        if (camera.h() - timing.signed_gamma(dir) * pi.y).abs() < 1e-3 * camera.h() {
            continue;
        }
        let f = rs_flow_closed_form(&camera, &v, &omega, &timing, px, z, dir).unwrap();
        let alpha = interpolation_factor(f.y, &timing, &camera, dir);
        let rebuilt = pi * alpha;
        let scale = f.norm().max(1e-300);
        worst = worst.max((rebuilt - f).norm() / scale);
        checked += 1;
    }
    (worst <= 1e-9, format!("{checked} samples, max rel err {worst:.1e}"))
}

pub fn two_path(config: &SelfcheckConfig) -> (bool, String) {
    let mut worst = 0.0f64;
    let mut pixels = 0usize;
    for i in 0..config.scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(31).wrapping_add(i as u64));
        let camera = CameraModel::centered(rng.random_range(150.0..=600.0), 96, 72).unwrap();
        let timing = RsTiming::new(1.0 - rng.random_range(0.0..1.0)).unwrap();
        let motion = MotionState::velocity(random_in_ball(&mut rng, 0.5), random_in_ball(&mut rng, 0.03));
        let base = rng.random_range(3.0..10.0);
        let depth = DepthMap::from_values(
            96,
            72,
            (0..96 * 72).map(|j| base + 0.02 * (j % 96) as f64 + 0.01 * (j / 96) as f64).collect(),
        )
        .unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let flow = FlowField::from_fn(96, 72, FlowKind::OpticalFlow, dir, |c, r| {
                let p = Vector2::new(c as f64, r as f64);
                rs_flow_closed_form(&camera, &motion.v, &motion.omega, &timing, p, depth.get(c, r)?, dir).ok()
            });
            for s in [0.0, 17.25, camera.middle_scanline(), 71.0] {
                let direct = undistortion_flow_from_geometry(&camera, &motion, &timing, &depth, s, dir).unwrap();
                let corr_geo =
                    correlation_map_from_geometry(&camera, &motion.v, &motion.omega, &timing, &depth, s, dir).unwrap();
                let corr_flow = correlation_map_from_flow(&flow, &timing, &camera, s).unwrap();
                for corr in [corr_geo, corr_flow] {
                    let via_flow = undistortion_from_flow(&flow, &corr).unwrap();
                    for j in 0..direct.data.len() {
                        if direct.valid[j] && via_flow.valid[j] {
                            worst = worst.max((direct.data[j] - via_flow.data[j]).norm());
                            pixels += 1;
                        }
                    }
                }
            }
        }
    }
    (worst <= 1e-6 && pixels > 0, format!("{pixels} pixel comparisons, max diff {worst:.1e} px"))
}
