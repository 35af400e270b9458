//! Synthetic scenes: a textured plane filmed by a camera moving with constant
//! velocity (or constant acceleration) between two frames.
//!
//! GS frames are rendered by casting a ray per pixel from the pose of the
//! requested scanline time and sampling the plane texture, so they have no
//! holes and do not depend on the forward-splatting code. RS frames take row
//! `s` from the GS frame rendered at scanline time `s`.
//!
//! The ray-traced correspondences (`trace_*`, `traced_*`, `gt_undistortion_flow`)
//! follow the exact projective geometry and serve as an oracle for the
//! closed-form first-order model used everywhere else.

mod config;
mod texture;

pub use config::{DepthRamp, SceneConfig, K_RANGE};
pub use texture::Texture;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    flow_from_motion_field, motion_field_centered, scanline_time_weight, CameraModel, DepthMap, Direction,
    FlowField, FlowKind, MotionState, RsTiming,
};
use crate::image::Image;

/// The plane `Z = z0 + dz_dx X + dz_dy Y` in the coordinates of the first
/// scanline of frame 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub z0: f64,
    pub dz_dx: f64,
    pub dz_dy: f64,
}

impl Plane {
    fn normal(&self) -> Vector3<f64> {
        Vector3::new(-self.dz_dx, -self.dz_dy, 1.0)
    }
}

/// Camera pose; `rotation` maps camera axes to reference axes.
#[derive(Clone, Copy, Debug)]
pub struct Pose {
    pub center: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

#[derive(Clone, Debug)]
pub struct GsFrame {
    pub image: Image,
    pub scanline_time: f64,
    pub depth: DepthMap,
    pub pose_weight: f64,
}

#[derive(Clone, Debug)]
pub struct RsFrame {
    pub image: Image,
    pub frame_index: u32,
    /// True where no scene sample was available for the pixel.
    pub occlusion_mask: Vec<bool>,
    pub depth: DepthMap,
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub texture: Texture,
    pub plane: Plane,
    pub camera: CameraModel,
    pub timing: RsTiming,
    pub motion: MotionState,
    pub frame_count: u32,
}

impl Scene {
    pub fn new(
        texture: Texture,
        plane: Plane,
        camera: CameraModel,
        timing: RsTiming,
        motion: MotionState,
        frame_count: u32,
    ) -> Result<Self> {
        if frame_count < 2 {
            return Err(Error::Config(format!("need at least 2 frames, got {frame_count}")));
        }
        if !(plane.z0 > 0.0) {
            return Err(Error::Config(format!("plane depth must be positive, got {}", plane.z0)));
        }
        let scene = Self {
            texture,
            plane,
            camera,
            timing,
            motion,
            frame_count,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Checks positive reference depth and `|gamma pi_v| < h` everywhere.
    fn validate(&self) -> Result<()> {
        let reference = self.pose(1, 0.0)?;
        let h = self.camera.h();
        for row in 0..self.camera.height {
            for col in 0..self.camera.width {
                let (_, z) = self.cast(&reference, col as f64, row as f64).ok_or(Error::PlaneBehindCamera {
                    col,
                    row,
                    depth: f64::NAN,
                })?;
                let p = self.camera.centered_coords(col as f64, row as f64);
                let pi = motion_field_centered(self.camera.focal_length, &self.motion.v, &self.motion.omega, p.x, p.y, z);
                if (self.timing.gamma() * pi.y).abs() >= h {
                    return Err(Error::Config(format!(
                        "vertical motion {:.1} px at ({col}, {row}) is too large for {} scanlines",
                        pi.y, self.camera.height
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pose_weight(&self, frame: u32, s: f64) -> Result<f64> {
        scanline_time_weight(frame, s, &self.timing, &self.camera, self.motion.k)
    }

    pub fn pose(&self, frame: u32, s: f64) -> Result<Pose> {
        let lambda = self.pose_weight(frame, s)?;
        Ok(self.pose_at_weight(lambda))
    }

    /// Constant body-frame twist `(v, omega)` integrated to weight `lambda`, so
    /// the relative pose of two scanlines depends only on their weight difference.
    fn pose_at_weight(&self, lambda: f64) -> Pose {
        let theta = self.motion.omega * lambda;
        Pose {
            center: left_jacobian(&theta) * (self.motion.v * lambda),
            rotation: Rotation3::new(theta),
        }
    }

    /// Ray through pixel (col, row) from `pose`; returns the plane point and its camera depth.
    fn cast(&self, pose: &Pose, col: f64, row: f64) -> Option<(Vector3<f64>, f64)> {
        let p = self.camera.centered_coords(col, row);
        let f = self.camera.focal_length;
        let dir = pose.rotation * Vector3::new(p.x / f, p.y / f, 1.0);
        let n = self.plane.normal();
        let denom = n.dot(&dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.plane.z0 - n.dot(&pose.center)) / denom;
        (t > 0.0).then(|| (pose.center + dir * t, t))
    }

    fn project(&self, pose: &Pose, point: &Vector3<f64>) -> Option<Vector2<f64>> {
        let pc = pose.rotation.inverse() * (point - pose.center);
        if pc.z <= 0.0 {
            return None;
        }
        let f = self.camera.focal_length;
        Some(Vector2::new(
            f * pc.x / pc.z + self.camera.principal_point.x,
            f * pc.y / pc.z + self.camera.principal_point.y,
        ))
    }

    fn shade(&self, point: &Vector3<f64>) -> [f32; 3] {
        let scale = self.camera.focal_length / self.plane.z0;
        self.texture.sample(
            point.x * scale + self.camera.principal_point.x,
            point.y * scale + self.camera.principal_point.y,
        )
    }

    /// Renders one image row from `pose` into `pixels` / `depth`.
    fn render_row(&self, pose: &Pose, row: usize, pixels: &mut [f32], depth: &mut [f64]) -> Result<()> {
        for col in 0..self.camera.width {
            let (point, z) = self
                .cast(pose, col as f64, row as f64)
                .ok_or(Error::PlaneBehindCamera { col, row, depth: f64::NAN })?;
            pixels[col * 3..col * 3 + 3].copy_from_slice(&self.shade(&point));
            depth[col] = z;
        }
        Ok(())
    }

    /// GS frame seen from the pose of scanline `s` of `frame`.
    pub fn render_gs(&self, frame: u32, s: f64) -> Result<GsFrame> {
        let pose_weight = self.pose_weight(frame, s)?;
        let pose = self.pose_at_weight(pose_weight);
        let (w, h) = (self.camera.width, self.camera.height);
        let mut image = Image::new(w, h, 3);
        let mut depth = vec![0.0; w * h];
        image
            .data
            .par_chunks_mut(w * 3)
            .zip(depth.par_chunks_mut(w))
            .enumerate()
            .try_for_each(|(row, (px, z))| self.render_row(&pose, row, px, z))?;
        Ok(GsFrame {
            image,
            scanline_time: s,
            depth: DepthMap::from_values(w, h, depth)?,
            pose_weight,
        })
    }

    /// RS frame: row `s` is rendered from the pose of scanline `s`.
    pub fn compose_rs(&self, frame: u32) -> Result<RsFrame> {
        let (w, h) = (self.camera.width, self.camera.height);
        let mut image = Image::new(w, h, 3);
        let mut depth = vec![0.0; w * h];
        image
            .data
            .par_chunks_mut(w * 3)
            .zip(depth.par_chunks_mut(w))
            .enumerate()
            .try_for_each(|(row, (px, z))| {
                let pose = self.pose(frame, row as f64)?;
                self.render_row(&pose, row, px, z)
            })?;
        Ok(RsFrame {
            image,
            frame_index: frame,
            occlusion_mask: vec![false; w * h],
            depth: DepthMap::from_values(w, h, depth)?,
        })
    }

    /// Closed-form optical flows between RS frames 1 and 2 (forward, backward),
    /// evaluated at every RS pixel with the depth it observes.
    pub fn gt_optical_flow(&self) -> Result<(FlowField, FlowField)> {
        let d1 = self.compose_rs(1)?.depth;
        let d2 = self.compose_rs(2)?.depth;
        Ok((
            self.closed_form_flow(&d1, Direction::Forward),
            self.closed_form_flow(&d2, Direction::Backward),
        ))
    }

    fn closed_form_flow(&self, depth: &DepthMap, direction: Direction) -> FlowField {
        let (v, omega) = self.motion.directed(direction);
        let cam = &self.camera;
        FlowField::from_fn(cam.width, cam.height, FlowKind::OpticalFlow, direction, |col, row| {
            let z = depth.get(col, row)?;
            let p = cam.centered_coords(col as f64, row as f64);
            let pi = motion_field_centered(cam.focal_length, &v, &omega, p.x, p.y, z);
            flow_from_motion_field(pi, &self.timing, cam, direction).ok()
        })
    }

    /// Scene point observed at RS pixel (col, row) of `frame`.
    pub fn trace_rs_point(&self, frame: u32, col: f64, row: f64) -> Option<Vector3<f64>> {
        let pose = self.pose(frame, row).ok()?;
        self.cast(&pose, col, row).map(|(p, _)| p)
    }

    /// Where the point seen at RS pixel (col, row) of `frame` appears in the GS
    /// frame of scanline `s` of `target_frame`.
    pub fn trace_to_gs(&self, frame: u32, col: f64, row: f64, target_frame: u32, s: f64) -> Option<Vector2<f64>> {
        let point = self.trace_rs_point(frame, col, row)?;
        self.project(&self.pose(target_frame, s).ok()?, &point)
    }

    /// Where the point seen at RS pixel (col, row) of `frame` appears in RS
    /// frame `target_frame`. The row it lands on determines the pose, so this
    /// is solved by fixed-point iteration on the row.
    pub fn trace_to_rs(&self, frame: u32, col: f64, row: f64, target_frame: u32) -> Option<Vector2<f64>> {
        let point = self.trace_rs_point(frame, col, row)?;
        let mut y = row;
        for _ in 0..100 {
            let q = self.project(&self.pose(target_frame, y).ok()?, &point)?;
            if (q.y - y).abs() < 1e-11 {
                return Some(q);
            }
            y = q.y;
        }
        None
    }

    /// Ray-traced optical flow between RS frames 1 and 2.
    pub fn traced_optical_flow(&self, direction: Direction) -> FlowField {
        let (from, to) = match direction {
            Direction::Forward => (1, 2),
            Direction::Backward => (2, 1),
        };
        let cam = &self.camera;
        FlowField::from_fn(cam.width, cam.height, FlowKind::OpticalFlow, direction, |col, row| {
            let (x, y) = (col as f64, row as f64);
            self.trace_to_rs(from, x, y, to).map(|q| q - Vector2::new(x, y))
        })
    }

    /// Ray-traced undistortion flow of RS frame `frame` (1 or 2) towards its scanline `s`.
    pub fn gt_undistortion_flow(&self, frame: u32, s: f64) -> FlowField {
        let direction = if frame == 1 { Direction::Forward } else { Direction::Backward };
        let cam = &self.camera;
        FlowField::from_fn(
            cam.width,
            cam.height,
            FlowKind::UndistortionFlow { target_scanline: s },
            direction,
            |col, row| {
                let (x, y) = (col as f64, row as f64);
                self.trace_to_gs(frame, x, y, frame, s).map(|q| q - Vector2::new(x, y))
            },
        )
    }

    /// Pixels of the GS frame at scanline `s` of `frame` that no RS pixel of
    /// `frame` lands on (true = occluded / uncovered).
    pub fn gt_occlusion(&self, frame: u32, s: f64) -> Vec<bool> {
        let (w, h) = (self.camera.width, self.camera.height);
        let flow = self.gt_undistortion_flow(frame, s);
        let mut covered = vec![false; w * h];
        for row in 0..h {
            for col in 0..w {
                if !flow.is_valid(col, row) {
                    continue;
                }
                let d = flow.get(col, row) + Vector2::new(col as f64, row as f64);
                let (fx, fy) = (d.x.floor(), d.y.floor());
                for (cx, wx) in [(fx, 1.0 - (d.x - fx)), (fx + 1.0, d.x - fx)] {
                    for (cy, wy) in [(fy, 1.0 - (d.y - fy)), (fy + 1.0, d.y - fy)] {
                        if wx <= 0.0 || wy <= 0.0 || cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                            continue;
                        }
                        covered[cy as usize * w + cx as usize] = true;
                    }
                }
            }
        }
        covered.into_iter().map(|c| !c).collect()
    }
}

/// Left Jacobian of SO(3): maps a body-frame velocity to the translation of
/// the screw motion `exp([theta, v])`.
fn left_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let a = theta.norm();
    let k = theta.cross_matrix();
    if a < 1e-6 {
        return Matrix3::identity() + k * 0.5 + k * k / 6.0;
    }
    Matrix3::identity() + k * ((1.0 - a.cos()) / (a * a)) + k * k * ((a - a.sin()) / (a * a * a))
}
