//! Dense (per-pixel) versions of the scalar relations. Per-pixel degeneracies
//! end up in validity masks; only structural problems are returned as errors.

use nalgebra::{Vector2, Vector3};

use super::field::check_dims;
use super::{
    correlation_factor, motion_field_centered, propagation_ratio, undistortion_factor, CameraModel,
    CorrelationMap, DepthMap, Direction, FlowField, FlowKind, MotionState, RsTiming, ROW_EPS,
    SINGULARITY_EPS,
};
use crate::error::{Error, Result};

/// Undistortion flow of the RS frame of `direction` towards scanline `s`,
/// computed directly from motion and depth.
pub fn undistortion_flow_from_geometry(
    camera: &CameraModel,
    motion: &MotionState,
    timing: &RsTiming,
    depth: &DepthMap,
    s: f64,
    direction: Direction,
) -> Result<FlowField> {
    check_dims((camera.width, camera.height), depth.dims())?;
    let (v, omega) = motion.directed(direction);
    let mut out = FlowField::zeros(
        camera.width,
        camera.height,
        FlowKind::UndistortionFlow { target_scanline: s },
        direction,
    );
    for row in 0..camera.height {
        let beta = undistortion_factor(s, row as f64, timing, camera, direction, motion.k)?;
        for col in 0..camera.width {
            let i = row * camera.width + col;
            match depth.get(col, row) {
                Some(z) => {
                    let p = camera.centered_coords(col as f64, row as f64);
                    out.data[i] = motion_field_centered(camera.focal_length, &v, &omega, p.x, p.y, z) * beta;
                }
                None => out.valid[i] = false,
            }
        }
    }
    Ok(out)
}

/// Signature of [`correlation_factor`]; lets checks substitute a variant.
pub type CorrelationFn = fn(f64, f64, &RsTiming, &CameraModel, f64, Direction) -> f64;

/// Per-pixel correlation factors towards scanline `s`, with the vertical motion
/// field taken from `(v, omega)` and `depth`.
pub fn correlation_map_from_geometry(
    camera: &CameraModel,
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    timing: &RsTiming,
    depth: &DepthMap,
    s: f64,
    direction: Direction,
) -> Result<CorrelationMap> {
    correlation_map_with(correlation_factor, camera, v, omega, timing, depth, s, direction)
}

/// [`correlation_map_from_geometry`] with a custom per-pixel factor.
#[allow(clippy::too_many_arguments)]
pub fn correlation_map_with(
    factor: CorrelationFn,
    camera: &CameraModel,
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    timing: &RsTiming,
    depth: &DepthMap,
    s: f64,
    direction: Direction,
) -> Result<CorrelationMap> {
    check_dims((camera.width, camera.height), depth.dims())?;
    let (v, omega) = match direction {
        Direction::Forward => (*v, *omega),
        Direction::Backward => (-*v, -*omega),
    };
    let mut out = CorrelationMap::filled(camera.width, camera.height, 0.0, s, direction);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let i = row * camera.width + col;
            match depth.get(col, row) {
                Some(z) => {
                    let p = camera.centered_coords(col as f64, row as f64);
                    let pi_v = motion_field_centered(camera.focal_length, &v, &omega, p.x, p.y, z).y;
                    out.data[i] = factor(s, row as f64, timing, camera, pi_v, direction);
                }
                None => out.valid[i] = false,
            }
        }
    }
    Ok(out)
}

/// Correlation factors towards scanline `s` read off an optical flow alone.
///
/// Substituting the interpolation relation into the correlation factor gives
/// `c = gamma (s - eta) / (h + gamma f_v)` (gamma signed by direction), so no
/// motion or depth is needed. Pixels at the interpolation singularity are
/// invalid.
pub fn correlation_map_from_flow(
    flow: &FlowField,
    timing: &RsTiming,
    camera: &CameraModel,
    s: f64,
) -> Result<CorrelationMap> {
    flow.check_camera(camera)?;
    if flow.kind != FlowKind::OpticalFlow {
        return Err(Error::FlowKindMismatch("expected an optical flow".into()));
    }
    let g = timing.signed_gamma(flow.direction);
    let h = camera.h();
    let mut out = CorrelationMap::filled(flow.width, flow.height, 0.0, s, flow.direction);
    for row in 0..flow.height {
        for col in 0..flow.width {
            let i = row * flow.width + col;
            let denom = h + g * flow.data[i].y;
            if !flow.valid[i] || denom.abs() <= SINGULARITY_EPS * h {
                out.valid[i] = false;
                continue;
            }
            out.data[i] = g * (s - row as f64) / denom;
        }
    }
    Ok(out)
}

/// Scales an optical flow by a correlation map, yielding the undistortion flow
/// towards the map's target scanline.
pub fn undistortion_from_flow(flow: &FlowField, corr: &CorrelationMap) -> Result<FlowField> {
    check_dims(flow.dims(), corr.dims())?;
    if flow.kind != FlowKind::OpticalFlow {
        return Err(Error::FlowKindMismatch("expected an optical flow".into()));
    }
    if flow.direction != corr.direction {
        return Err(Error::FlowKindMismatch(format!(
            "flow is {:?} but correlation map is {:?}",
            flow.direction, corr.direction
        )));
    }
    let data = flow.data.iter().zip(&corr.data).map(|(f, c)| f * *c).collect();
    let valid = flow.valid.iter().zip(&corr.valid).map(|(a, b)| *a && *b).collect();
    Ok(FlowField {
        width: flow.width,
        height: flow.height,
        data,
        kind: FlowKind::UndistortionFlow {
            target_scanline: corr.target_scanline,
        },
        direction: flow.direction,
        valid,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IntervalMode {
    /// `(0, 1)` / `(-1, 0)` off the middle row; zero is a violation there.
    #[default]
    Open,
    /// `[0, 1]` / `[-1, 0]` off the middle row.
    Closed,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoundsReport {
    pub violations: usize,
    /// Rows holding at least one violation, ascending.
    pub rows: Vec<usize>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the sign and magnitude structure of a middle-scanline correlation map.
pub fn validate_correlation_bounds(map: &CorrelationMap) -> Result<BoundsReport> {
    validate_correlation_bounds_with(map, IntervalMode::Open)
}

pub fn validate_correlation_bounds_with(map: &CorrelationMap, mode: IntervalMode) -> Result<BoundsReport> {
    let middle = map.height as f64 / 2.0;
    if (map.target_scanline - middle).abs() > 1e-9 {
        return Err(Error::WrongTargetScanline {
            expected: middle,
            actual: map.target_scanline,
        });
    }
    // Rows above the middle scanline are positive for the forward map.
    let upper_sign = match map.direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let mut report = BoundsReport::default();
    for row in 0..map.height {
        let eta = row as f64;
        let mut row_bad = false;
        for col in 0..map.width {
            let i = row * map.width + col;
            if !map.valid[i] {
                continue;
            }
            let c = map.data[i];
            let ok = if eta == middle {
                c == 0.0
            } else {
                let signed = if eta < middle { c * upper_sign } else { -c * upper_sign };
                match mode {
                    IntervalMode::Open => signed > 0.0 && signed < 1.0,
                    IntervalMode::Closed => (0.0..=1.0).contains(&signed),
                }
            };
            if !ok {
                report.violations += 1;
                row_bad = true;
            }
        }
        if row_bad {
            report.rows.push(row);
        }
    }
    Ok(report)
}

/// Retargets an undistortion flow from its current scanline to `s2`.
///
/// `phi = None` uses the constant velocity ratio; `Some(phi)` the constant
/// acceleration ratio with `phi = k * gamma`. Pixels on a row within
/// [`ROW_EPS`] of the source scanline carry no information about other targets
/// and are marked invalid.
pub fn propagate(flow: &FlowField, s2: f64, phi: Option<f64>, camera: &CameraModel) -> Result<FlowField> {
    flow.check_camera(camera)?;
    let s1 = flow
        .target_scanline()
        .ok_or_else(|| Error::FlowKindMismatch("propagation needs an undistortion flow".into()))?;
    let h = camera.h();
    let mut out = FlowField {
        kind: FlowKind::UndistortionFlow { target_scanline: s2 },
        ..flow.clone()
    };
    for row in 0..flow.height {
        let eta = row as f64;
        let range = row * flow.width..(row + 1) * flow.width;
        if (s1 - eta).abs() <= ROW_EPS {
            out.data[range.clone()].fill(Vector2::zeros());
            out.valid[range].fill(false);
            continue;
        }
        let ratio = propagation_ratio(s1, s2, eta, phi, h);
        for u in &mut out.data[range] {
            *u *= ratio;
        }
    }
    Ok(out)
}
