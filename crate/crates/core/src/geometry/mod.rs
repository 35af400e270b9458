//! Differential rolling-shutter geometry.
//!
//! Everything here works in pixel coordinates measured from the principal
//! point, with the focal length in pixels. Scanlines are zero based and the top
//! row is read out first. Frame `n` (1-based) starts its readout at normalized
//! time `n - 1`; scanline `s` of that frame is exposed at `n - 1 + gamma * s / h`.
//!
//! The backward direction (frame 2 towards frame 1, or frame 2 towards one of
//! its own scanlines) is obtained from the forward formulas by negating the
//! velocities and the readout ratio.

mod dense;
mod field;

pub use dense::{
    correlation_map_from_flow, correlation_map_from_geometry, correlation_map_with, propagate, undistortion_flow_from_geometry,
    undistortion_from_flow, validate_correlation_bounds, validate_correlation_bounds_with,
    BoundsReport, CorrelationFn, IntervalMode,
};
pub(crate) use field::check_dims;
pub use field::{CorrelationMap, DepthMap, FlowField, FlowKind};

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

/// Relative guard on `h - gamma * pi_v`, in units of `h`.
pub const SINGULARITY_EPS: f64 = 1e-6;
/// Propagation pole guard, in scanlines.
pub const ROW_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub focal_length: f64,
    pub principal_point: Vector2<f64>,
    pub width: usize,
    /// Number of scanlines.
    pub height: usize,
}

impl CameraModel {
    pub fn new(focal_length: f64, principal_point: Vector2<f64>, width: usize, height: usize) -> Result<Self> {
        if !(focal_length > 0.0) || !focal_length.is_finite() {
            return Err(Error::InvalidParameter(format!("focal length must be positive, got {focal_length}")));
        }
        if width < 2 || height < 2 {
            return Err(Error::InvalidParameter(format!(
                "image must be at least 2x2, got {width}x{height}"
            )));
        }
        let (cx, cy) = (principal_point.x, principal_point.y);
        if !(0.0..=(width - 1) as f64).contains(&cx) || !(0.0..=(height - 1) as f64).contains(&cy) {
            return Err(Error::InvalidParameter(format!(
                "principal point ({cx}, {cy}) lies outside the {width}x{height} image"
            )));
        }
        Ok(Self {
            focal_length,
            principal_point,
            width,
            height,
        })
    }

    /// Camera with the principal point at `(width / 2, height / 2)`.
    pub fn centered(focal_length: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal_length,
            Vector2::new((width / 2) as f64, (height / 2) as f64),
            width,
            height,
        )
    }

    pub fn h(&self) -> f64 {
        self.height as f64
    }

    /// The middle scanline `h / 2`.
    pub fn middle_scanline(&self) -> f64 {
        self.h() / 2.0
    }

    /// Pixel (col, row) to coordinates relative to the principal point.
    #[inline]
    pub fn centered_coords(&self, col: f64, row: f64) -> Vector2<f64> {
        Vector2::new(col - self.principal_point.x, row - self.principal_point.y)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsTiming {
    gamma: f64,
}

impl RsTiming {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("readout ratio must lie in (0, 1], got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The readout ratio with the sign used by `direction`.
    #[inline]
    pub fn signed_gamma(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Forward => self.gamma,
            Direction::Backward => -self.gamma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionState {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    /// Acceleration factor; zero is the constant velocity model.
    pub k: f64,
}

impl MotionState {
    pub fn new(v: Vector3<f64>, omega: Vector3<f64>, k: f64) -> Result<Self> {
        check_k(k)?;
        Ok(Self { v, omega, k })
    }

    pub fn velocity(v: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Self { v, omega, k: 0.0 }
    }

    pub fn is_static(&self) -> bool {
        self.v == Vector3::zeros() && self.omega == Vector3::zeros()
    }

    /// `(v, omega)` as seen by `direction`: negated for backward warping.
    pub fn directed(&self, direction: Direction) -> (Vector3<f64>, Vector3<f64>) {
        match direction {
            Direction::Forward => (self.v, self.omega),
            Direction::Backward => (-self.v, -self.omega),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Frame 1 towards frame 2, or frame 1 towards one of its scanlines.
    Forward,
    /// Frame 2 towards frame 1, or frame 2 towards one of its scanlines.
    Backward,
}

impl Direction {
    pub fn source_frame(self) -> u32 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => 2,
        }
    }
}

fn check_k(k: f64) -> Result<()> {
    if (k + 2.0).abs() < 1e-12 || !k.is_finite() {
        return Err(Error::DegenerateAcceleration);
    }
    Ok(())
}

/// Image motion field `A v / Z + B omega` at an absolute pixel position.
pub fn motion_field(
    camera: &CameraModel,
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    pixel: Vector2<f64>,
    depth: f64,
) -> Result<Vector2<f64>> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    let p = camera.centered_coords(pixel.x, pixel.y);
    Ok(motion_field_centered(camera.focal_length, v, omega, p.x, p.y, depth))
}

/// Motion field at principal-point-relative coordinates; no depth check.
#[inline]
pub(crate) fn motion_field_centered(
    f: f64,
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    x: f64,
    y: f64,
    depth: f64,
) -> Vector2<f64> {
    let tu = (-f * v.x + x * v.z) / depth;
    let tv = (-f * v.y + y * v.z) / depth;
    let ru = x * y / f * omega.x - (f + x * x / f) * omega.y + y * omega.z;
    let rv = (f + y * y / f) * omega.x - x * y / f * omega.y - x * omega.z;
    Vector2::new(tu + ru, tv + rv)
}

/// Rows of the motion field's linear map, `pi = J * [v; omega]` with `J` 2x6.
pub(crate) fn motion_field_jacobian(f: f64, x: f64, y: f64, depth: f64) -> [[f64; 6]; 2] {
    [
        [-f / depth, 0.0, x / depth, x * y / f, -(f + x * x / f), y],
        [0.0, -f / depth, y / depth, f + y * y / f, -x * y / f, -x],
    ]
}

/// Pose interpolation weight of scanline `s` in `frame` (1-based).
///
/// Constant acceleration profile `2/(k+2) * (t + k/2 t^2)` in normalized time
/// `t = frame - 1 + gamma * s / h`; at `k = 0` this is exactly `t`.
pub fn scanline_time_weight(frame: u32, s: f64, timing: &RsTiming, camera: &CameraModel, k: f64) -> Result<f64> {
    check_k(k)?;
    if frame == 0 {
        return Err(Error::InvalidParameter("frames are numbered from 1".into()));
    }
    let t = (frame - 1) as f64 + timing.gamma * s / camera.h();
    Ok(2.0 / (k + 2.0) * (t + k / 2.0 * t * t))
}

/// Relative motion between scanline `s1` of frame 1 and scanline `s2` of frame 2.
pub fn relative_scanline_motion(
    s1: f64,
    s2: f64,
    motion: &MotionState,
    timing: &RsTiming,
    camera: &CameraModel,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let l1 = scanline_time_weight(1, s1, timing, camera, motion.k)?;
    let l2 = scanline_time_weight(2, s2, timing, camera, motion.k)?;
    let d = l2 - l1;
    Ok((motion.v * d, motion.omega * d))
}

/// Optical flow scaling `1 + gamma f_v / h` (forward) or `1 - gamma f_v / h` (backward).
pub fn interpolation_factor(f_v: f64, timing: &RsTiming, camera: &CameraModel, direction: Direction) -> f64 {
    1.0 + timing.signed_gamma(direction) * f_v / camera.h()
}

/// Closed-form RS-aware optical flow `h / (h - gamma pi_v) * pi`.
pub fn rs_flow_closed_form(
    camera: &CameraModel,
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    timing: &RsTiming,
    pixel: Vector2<f64>,
    depth: f64,
    direction: Direction,
) -> Result<Vector2<f64>> {
    let (v, omega) = match direction {
        Direction::Forward => (*v, *omega),
        Direction::Backward => (-*v, -*omega),
    };
    let pi = motion_field(camera, &v, &omega, pixel, depth)?;
    flow_from_motion_field(pi, timing, camera, direction)
}

#[inline]
pub(crate) fn flow_from_motion_field(
    pi: Vector2<f64>,
    timing: &RsTiming,
    camera: &CameraModel,
    direction: Direction,
) -> Result<Vector2<f64>> {
    let h = camera.h();
    let denominator = h - timing.signed_gamma(direction) * pi.y;
    if denominator.abs() <= SINGULARITY_EPS * h {
        return Err(Error::InterpolationSingularity { denominator });
    }
    Ok(pi * (h / denominator))
}

/// Undistortion scaling for a pixel on row `eta` towards target scanline `s`.
///
/// `gamma (s - eta) / h * (2h + k gamma (s - eta)) / (h (k + 2))`, with gamma
/// negated for the backward direction. At `k = 0` the second factor is exactly 1.
pub fn undistortion_factor(
    s: f64,
    eta: f64,
    timing: &RsTiming,
    camera: &CameraModel,
    direction: Direction,
    k: f64,
) -> Result<f64> {
    check_k(k)?;
    let g = timing.signed_gamma(direction);
    let h = camera.h();
    let offset = s - eta;
    Ok(g * offset / h * ((2.0 * h + k * g * offset) / (h * (k + 2.0))))
}

/// Correlation factor `gamma (s - eta) (h - gamma pi_v) / h^2` linking optical
/// flow to undistortion flow; `pi_v` is the vertical motion field of the
/// direction-adjusted motion.
pub fn correlation_factor(
    s: f64,
    eta: f64,
    timing: &RsTiming,
    camera: &CameraModel,
    pi_v: f64,
    direction: Direction,
) -> f64 {
    let g = timing.signed_gamma(direction);
    let h = camera.h();
    g * (s - eta) * (h - g * pi_v) / (h * h)
}

/// Ratio applied to an undistortion flow on row `eta` when retargeting it from
/// scanline `s1` to `s2`. `phi = None` is the constant velocity ratio.
#[inline]
pub fn propagation_ratio(s1: f64, s2: f64, eta: f64, phi: Option<f64>, h: f64) -> f64 {
    let linear = (s2 - eta) / (s1 - eta);
    match phi {
        None => linear,
        Some(phi) => linear * ((2.0 * h + phi * (s2 - eta)) / (2.0 * h + phi * (s1 - eta))),
    }
}
