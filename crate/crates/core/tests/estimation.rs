use nalgebra::{Vector2, Vector3};
use unroll_core::estimate::{estimate_motion_ls, estimate_motion_robust, RobustParams};
use unroll_core::geometry::MotionState;
use unroll_core::scene::{Plane, Scene, Texture};
use unroll_core::{CameraModel, RsTiming};

const V: [f64; 3] = [0.3, -0.1, 0.06];
const OMEGA: [f64; 3] = [0.003, 0.002, -0.005];

fn scene() -> Scene {
    Scene::new(
        Texture::procedural(2),
        Plane {
            z0: 5.0,
            dz_dx: 0.2,
            dz_dy: -0.1,
        },
        CameraModel::centered(220.0, 128, 96).unwrap(),
        RsTiming::new(0.8).unwrap(),
        MotionState::velocity(Vector3::from(V), Vector3::from(OMEGA)),
        2,
    )
    .unwrap()
}

fn rel_err(v: Vector3<f64>, omega: Vector3<f64>) -> f64 {
    let truth = [V, OMEGA].concat();
    let got = [v.x, v.y, v.z, omega.x, omega.y, omega.z];
    let num: f64 = truth.iter().zip(got).map(|(a, b)| (a - b).powi(2)).sum();
    (num / truth.iter().map(|a| a * a).sum::<f64>()).sqrt()
}

#[test]
fn least_squares_recovers_simulated_motion() {
    let sc = scene();
    let rs = sc.compose_rs(1).unwrap();
    let (fwd, _) = sc.gt_optical_flow().unwrap();
    let fit = estimate_motion_ls(&fwd, &rs.depth, &sc.camera, &sc.timing).unwrap();
    assert!(rel_err(fit.v, fit.omega) <= 1e-6);
    assert!(fit.residual <= 1e-9);
}

#[test]
fn consensus_rejects_outliers() {
    let sc = scene();
    let rs = sc.compose_rs(1).unwrap();
    let (mut fwd, _) = sc.gt_optical_flow().unwrap();
    // Every tenth pixel gets a gross error.
    for (i, f) in fwd.data.iter_mut().enumerate().filter(|(i, _)| i % 10 == 3) {
        *f += Vector2::new(4.0 + (i % 17) as f64, -3.0 - (i % 5) as f64);
    }
    let plain = estimate_motion_ls(&fwd, &rs.depth, &sc.camera, &sc.timing).unwrap();
    let robust = estimate_motion_robust(&fwd, &rs.depth, &sc.camera, &sc.timing, &RobustParams::default()).unwrap();
    assert!(rel_err(plain.v, plain.omega) > 1e-2);
    assert!(rel_err(robust.fit.v, robust.fit.omega) <= 1e-3);
    let corrupted: Vec<usize> = (0..fwd.data.len()).filter(|i| i % 10 == 3).collect();
    assert!(corrupted.iter().all(|&i| !robust.inliers[i]));
}
