use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    check_dims, interpolation_factor, motion_field_jacobian, CameraModel, DepthMap, Direction, FlowField, FlowKind, RsTiming,
};

/// Relative singular value below which the system counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionFit {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    /// RMS residual of the motion field in pixels.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct RobustFit {
    pub fit: MotionFit,
    pub inliers: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustParams {
    pub iterations: usize,
    pub inlier_threshold_px: f64,
    pub seed: u64,
}

impl Default for RobustParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold_px: 0.5,
            seed: 0,
        }
    }
}

/// One pixel's linear constraint: `target = J * [v; omega]`.
struct Constraint {
    index: usize,
    jac: [[f64; 6]; 2],
    target: Vector2<f64>,
}

/// Turns each valid pixel into two equations. The observed flow is divided by
/// its interpolation factor so the system is linear in the motion; for the
/// backward direction the unknown is the negated motion.
fn constraints(
    flow: &FlowField,
    depth: &DepthMap,
    camera: &CameraModel,
    timing: &RsTiming,
    rs_aware: bool,
) -> Result<Vec<Constraint>> {
    if flow.kind != FlowKind::OpticalFlow {
        return Err(Error::FlowKindMismatch("motion estimation needs an optical flow".into()));
    }
    flow.check_camera(camera)?;
    check_dims(flow.dims(), depth.dims())?;
    let f = camera.focal_length;
    let mut out = Vec::with_capacity(flow.valid_count());
    for row in 0..flow.height {
        for col in 0..flow.width {
            let Some(z) = depth.get(col, row) else { continue };
            if !flow.is_valid(col, row) {
                continue;
            }
            let obs = flow.get(col, row);
            let alpha = if rs_aware {
                interpolation_factor(obs.y, timing, camera, flow.direction)
            } else {
                1.0
            };
            if alpha.abs() < 1e-12 {
                continue;
            }
            let p = camera.centered_coords(col as f64, row as f64);
            out.push(Constraint {
                index: row * flow.width + col,
                jac: motion_field_jacobian(f, p.x, p.y, z),
                target: obs / alpha,
            });
        }
    }
    Ok(out)
}

/// Column-scaled QR solve of the stacked system.
fn solve(cs: &[&Constraint]) -> Result<[f64; 6]> {
    if cs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            available: cs.len(),
        });
    }
    let n = 2 * cs.len();
    let mut a = DMatrix::<f64>::zeros(n, 6);
    let mut b = DVector::<f64>::zeros(n);
    for (i, c) in cs.iter().enumerate() {
        for j in 0..6 {
            a[(2 * i, j)] = c.jac[0][j];
            a[(2 * i + 1, j)] = c.jac[1][j];
        }
        b[2 * i] = c.target.x;
        b[2 * i + 1] = c.target.y;
    }
    let mut scale = [0.0; 6];
    for (j, sc) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        *sc = if norm > 0.0 { norm } else { 1.0 };
        a.column_mut(j).unscale_mut(*sc);
    }
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..6).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min / max < RANK_TOL {
        return Err(Error::RankDeficient(if min > 0.0 { max / min } else { f64::INFINITY }));
    }
    let qtb = qr.q().transpose() * &b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient(f64::INFINITY))?;
    Ok(std::array::from_fn(|j| x[j] / scale[j]))
}

fn predict(c: &Constraint, x: &[f64; 6]) -> Vector2<f64> {
    let dot = |r: &[f64; 6]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    Vector2::new(dot(&c.jac[0]), dot(&c.jac[1]))
}

fn finish(cs: &[&Constraint], x: [f64; 6], direction: Direction) -> MotionFit {
    let sq: f64 = cs.iter().map(|c| (predict(c, &x) - c.target).norm_squared()).sum();
    let residual = (sq / (2 * cs.len()) as f64).sqrt();
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    MotionFit {
        v: Vector3::new(x[0], x[1], x[2]) * sign,
        omega: Vector3::new(x[3], x[4], x[5]) * sign,
        residual,
    }
}

fn fit(flow: &FlowField, depth: &DepthMap, camera: &CameraModel, timing: &RsTiming, rs_aware: bool) -> Result<MotionFit> {
    let cs = constraints(flow, depth, camera, timing, rs_aware)?;
    let refs: Vec<&Constraint> = cs.iter().collect();
    let x = solve(&refs)?;
    Ok(finish(&refs, x, flow.direction))
}

/// Least-squares camera motion `(v, omega)` between the two frames from an
/// RS optical flow and the depth seen by its source frame. The result is
/// always the forward motion, whichever direction the flow has.
pub fn estimate_motion_ls(
    flow: &FlowField,
    depth: &DepthMap,
    camera: &CameraModel,
    timing: &RsTiming,
) -> Result<MotionFit> {
    fit(flow, depth, camera, timing, true)
}

/// Random-sample consensus over 3-pixel minimal fits, refit on the largest
/// inlier set. Inliers are pixels whose motion-field residual is below the
/// threshold.
pub fn estimate_motion_robust(
    flow: &FlowField,
    depth: &DepthMap,
    camera: &CameraModel,
    timing: &RsTiming,
    params: &RobustParams,
) -> Result<RobustFit> {
    if !(params.inlier_threshold_px > 0.0) || params.iterations == 0 {
        return Err(Error::InvalidParameter("robust fit needs iterations > 0 and a positive threshold".into()));
    }
    let cs = constraints(flow, depth, camera, timing, true)?;
    if cs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            available: cs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let thr2 = params.inlier_threshold_px * params.inlier_threshold_px;
    let count_inliers = |x: &[f64; 6]| cs.iter().filter(|c| (predict(c, x) - c.target).norm_squared() <= thr2).count();

    let mut best: Option<([f64; 6], usize)> = None;
    for _ in 0..params.iterations {
        let pick = sample(&mut rng, cs.len(), 3);
        let minimal: Vec<&Constraint> = pick.iter().map(|i| &cs[i]).collect();
        let Ok(x) = solve(&minimal) else { continue };
        let n = count_inliers(&x);
        if best.as_ref().is_none_or(|(_, b)| n > *b) {
            best = Some((x, n));
        }
    }
    let ratio = best.as_ref().map_or(0.0, |(_, n)| *n as f64 / cs.len() as f64);
    let Some((mut x, _)) = best.filter(|_| ratio >= 0.1) else {
        return Err(Error::NoConsensus(ratio));
    };
    // Refit on the consensus set, then once more on the refined inliers.
    for _ in 0..2 {
        let inl: Vec<&Constraint> = cs.iter().filter(|c| (predict(c, &x) - c.target).norm_squared() <= thr2).collect();
        x = solve(&inl)?;
    }
    let inl: Vec<&Constraint> = cs.iter().filter(|c| (predict(c, &x) - c.target).norm_squared() <= thr2).collect();
    let mut inliers = vec![false; flow.width * flow.height];
    for c in &inl {
        inliers[c.index] = true;
    }
    Ok(RobustFit {
        fit: finish(&inl, x, flow.direction),
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rs_flow_closed_form;

    fn setup(v: Vector3<f64>, omega: Vector3<f64>, gamma: f64) -> (CameraModel, RsTiming, DepthMap, FlowField) {
        let cam = CameraModel::centered(200.0, 40, 30).unwrap();
        let timing = RsTiming::new(gamma).unwrap();
        let depth = DepthMap::from_values(40, 30, (0..1200).map(|i| 3.0 + 0.05 * (i % 40) as f64 + 0.02 * (i / 40) as f64).collect())
            .unwrap();
        let flow = FlowField::from_fn(40, 30, FlowKind::OpticalFlow, Direction::Forward, |c, r| {
            rs_flow_closed_form(&cam, &v, &omega, &timing, Vector2::new(c as f64, r as f64), depth.get(c, r)?, Direction::Forward).ok()
        });
        (cam, timing, depth, flow)
    }

    #[test]
    fn zero_flow_gives_zero_motion() {
        let (cam, t, d, _) = setup(Vector3::zeros(), Vector3::zeros(), 1.0);
        let flow = FlowField::zeros(40, 30, FlowKind::OpticalFlow, Direction::Forward);
        let fit = estimate_motion_ls(&flow, &d, &cam, &t).unwrap();
        assert_eq!(fit.v, Vector3::zeros());
        assert_eq!(fit.omega, Vector3::zeros());
        assert_eq!(fit.residual, 0.0);
    }

    #[test]
    fn rs_correction_lowers_residual() {
        let (cam, t, d, flow) = setup(Vector3::new(0.1, 1.2, 0.05), Vector3::new(0.01, 0.0, 0.0), 1.0);
        let aware = fit(&flow, &d, &cam, &t, true).unwrap();
        let naive = fit(&flow, &d, &cam, &t, false).unwrap();
        assert!(aware.residual < 1e-9);
        assert!(naive.residual > aware.residual);
    }

    #[test]
    fn too_few_pixels() {
        let (cam, t, d, mut flow) = setup(Vector3::new(0.1, 0.0, 0.0), Vector3::zeros(), 1.0);
        flow.valid.iter_mut().skip(2).for_each(|v| *v = false);
        assert!(matches!(
            estimate_motion_ls(&flow, &d, &cam, &t),
            Err(Error::InsufficientData { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn constant_depth_column_is_rank_deficient() {
        // On the principal column with constant depth, v_x and omega_y produce
        // proportional flows.
        let cam = CameraModel::centered(200.0, 40, 30).unwrap();
        let t = RsTiming::new(1.0).unwrap();
        let d = DepthMap::constant(40, 30, 5.0);
        let flow = FlowField::from_fn(40, 30, FlowKind::OpticalFlow, Direction::Forward, |c, r| {
            (c == 20).then(|| Vector2::new(0.1 * r as f64, 0.3))
        });
        assert!(matches!(estimate_motion_ls(&flow, &d, &cam, &t), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn backward_flow_recovers_forward_motion() {
        let v = Vector3::new(0.2, -0.1, 0.03);
        let omega = Vector3::new(0.002, -0.003, 0.01);
        let cam = CameraModel::centered(200.0, 40, 30).unwrap();
        let t = RsTiming::new(0.8).unwrap();
        let d = DepthMap::from_values(40, 30, (0..1200).map(|i| 4.0 + 0.03 * (i % 40) as f64).collect()).unwrap();
        let flow = FlowField::from_fn(40, 30, FlowKind::OpticalFlow, Direction::Backward, |c, r| {
            rs_flow_closed_form(&cam, &v, &omega, &t, Vector2::new(c as f64, r as f64), d.get(c, r)?, Direction::Backward).ok()
        });
        let fit = estimate_motion_ls(&flow, &d, &cam, &t).unwrap();
        assert!((fit.v - v).norm() <= 1e-6 * v.norm());
        assert!((fit.omega - omega).norm() <= 1e-6 * omega.norm());
    }

    #[test]
    fn consensus_fails_on_noise() {
        let (cam, t, d, mut flow) = setup(Vector3::new(0.1, 0.0, 0.0), Vector3::zeros(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand::Rng;
        for u in &mut flow.data {
            *u = Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        }
        let params = RobustParams {
            iterations: 20,
            inlier_threshold_px: 1e-3,
            seed: 1,
        };
        assert!(matches!(
            estimate_motion_robust(&flow, &d, &cam, &t, &params),
            Err(Error::NoConsensus(_))
        ));
    }
}
