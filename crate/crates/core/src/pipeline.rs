//! Two-frame inversion: optical flows to correlation maps to middle-scanline
//! undistortion flows, propagated to any scanline and splatted into GS frames.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    check_dims, correlation_map_from_flow, interpolation_factor, propagate, undistortion_factor,
    undistortion_from_flow, CameraModel, DepthMap, Direction, FlowField, FlowKind, RsTiming, ROW_EPS,
};
use crate::image::Image;
use crate::warp::{splat_forward, SplatConfig, Splatted, WeightMode};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum PropagationModel {
    #[default]
    Velocity,
    /// Per-direction acceleration parameters; `phi = 0` reproduces `Velocity`.
    Acceleration { phi_forward: f64, phi_backward: f64 },
}

impl PropagationModel {
    pub fn phi(&self, direction: Direction) -> Option<f64> {
        match (self, direction) {
            (Self::Velocity, _) => None,
            (Self::Acceleration { phi_forward, .. }, Direction::Forward) => Some(*phi_forward),
            (Self::Acceleration { phi_backward, .. }, Direction::Backward) => Some(*phi_backward),
        }
    }
}

/// Holds the middle-scanline undistortion flows of both RS frames.
#[derive(Clone, Debug)]
pub struct Inverter {
    camera: CameraModel,
    timing: RsTiming,
    middle: [FlowField; 2],
    /// Optical flows, used to fill the middle row when propagating.
    flows: Option<[FlowField; 2]>,
}

fn slot(direction: Direction) -> usize {
    match direction {
        Direction::Forward => 0,
        Direction::Backward => 1,
    }
}

impl Inverter {
    /// Builds the middle-scanline undistortion flows from the forward
    /// (RS1 to RS2) and backward (RS2 to RS1) optical flows.
    pub fn new(camera: CameraModel, timing: RsTiming, forward: FlowField, backward: FlowField) -> Result<Self> {
        let m = camera.middle_scanline();
        let mut middle = Vec::with_capacity(2);
        for (flow, dir) in [(&forward, Direction::Forward), (&backward, Direction::Backward)] {
            if flow.kind != FlowKind::OpticalFlow || flow.direction != dir {
                return Err(Error::FlowKindMismatch(format!("expected a {dir:?} optical flow")));
            }
            let corr = correlation_map_from_flow(flow, &timing, &camera, m)?;
            middle.push(undistortion_from_flow(flow, &corr)?);
        }
        let backward_m = middle.pop().unwrap();
        let forward_m = middle.pop().unwrap();
        Ok(Self {
            camera,
            timing,
            middle: [forward_m, backward_m],
            flows: Some([forward, backward]),
        })
    }

    /// Uses given middle-scanline undistortion flows directly. Without optical
    /// flows the middle row cannot be propagated and stays invalid.
    pub fn from_middle_flows(
        camera: CameraModel,
        timing: RsTiming,
        forward: FlowField,
        backward: FlowField,
    ) -> Result<Self> {
        let m = camera.middle_scanline();
        for (u, dir) in [(&forward, Direction::Forward), (&backward, Direction::Backward)] {
            u.check_camera(&camera)?;
            if u.direction != dir || u.target_scanline() != Some(m) {
                return Err(Error::FlowKindMismatch(format!(
                    "expected a {dir:?} undistortion flow towards scanline {m}"
                )));
            }
        }
        Ok(Self {
            camera,
            timing,
            middle: [forward, backward],
            flows: None,
        })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn middle_flow(&self, direction: Direction) -> &FlowField {
        &self.middle[slot(direction)]
    }

    /// Undistortion flow of the RS frame of `direction` towards its scanline `s`.
    ///
    /// Rows are propagated from the middle scanline. The middle row itself has
    /// zero flow there, so it is rebuilt as `beta(s) * flow / alpha` from the
    /// optical flow (the motion field recovered from the flow).
    pub fn undistortion_flow(&self, direction: Direction, s: f64, phi: Option<f64>) -> Result<FlowField> {
        let h = self.camera.h();
        if !(0.0..=h - 1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!("scanline {s} outside [0, {}]", h - 1.0)));
        }
        let mut u = propagate(self.middle_flow(direction), s, phi, &self.camera)?;
        let Some(flows) = &self.flows else { return Ok(u) };
        let flow = &flows[slot(direction)];
        let m = self.camera.middle_scanline();
        let row = m.round();
        if (row - m).abs() > ROW_EPS || row < 0.0 || row as usize >= self.camera.height {
            return Ok(u);
        }
        let g = self.timing.signed_gamma(direction);
        let k = phi.map_or(0.0, |p| p / g);
        let beta = undistortion_factor(s, row, &self.timing, &self.camera, direction, k)?;
        let row = row as usize;
        for col in 0..u.width {
            let i = row * u.width + col;
            let f = flow.data[i];
            let alpha = interpolation_factor(f.y, &self.timing, &self.camera, direction);
            if flow.valid[i] && alpha.abs() > 1e-12 {
                u.data[i] = f / alpha * beta;
                u.valid[i] = true;
            }
        }
        Ok(u)
    }

    /// GS frame at scanline `s` of the frame `direction` starts from.
    pub fn render(
        &self,
        rs: &Image,
        direction: Direction,
        s: f64,
        phi: Option<f64>,
        weights: Option<&[f64]>,
        splat: &SplatConfig,
    ) -> Result<Splatted> {
        let u = self.undistortion_flow(direction, s, phi)?;
        splat_forward(rs, &u, weights, splat)
    }
}

/// Splat weights for `mode`. Inverse depth falls back to brightness constancy
/// when no depth is given; brightness needs the optical flow from `src` to `other`.
pub fn splat_weights(
    mode: WeightMode,
    depth: Option<&DepthMap>,
    src: &Image,
    other: &Image,
    flow: &FlowField,
) -> Result<Option<Vec<f64>>> {
    check_dims(src.dims(), other.dims())?;
    check_dims(src.dims(), flow.dims())?;
    match (mode, depth) {
        (WeightMode::Uniform, _) => Ok(None),
        (WeightMode::InverseDepth, Some(d)) => {
            check_dims(src.dims(), d.dims())?;
            let (sum, n) = d
                .data
                .iter()
                .zip(&d.valid)
                .filter(|(_, v)| **v)
                .fold((0.0, 0usize), |(s, n), (z, _)| (s + z, n + 1));
            if n == 0 {
                return Ok(Some(vec![0.0; d.data.len()]));
            }
            let mean = sum / n as f64;
            Ok(Some(
                d.data.iter().zip(&d.valid).map(|(z, v)| if *v { mean / z } else { 0.0 }).collect(),
            ))
        }
        (WeightMode::InverseDepth, None) | (WeightMode::Brightness, _) => {
            let a = src.to_gray();
            let b = other.to_gray();
            let mut px = [0.0f32];
            Ok(Some(
                (0..a.data.len())
                    .map(|i| {
                        let (col, row) = (i % a.width, i / a.width);
                        let f = flow.data[i];
                        b.sample_bilinear(col as f64 + f.x, row as f64 + f.y, &mut px);
                        -((a.data[i] - px[0]).abs() as f64)
                    })
                    .collect(),
            ))
        }
    }
}

/// Forward-path (from RS1) and backward-path (from RS2) GS frames at one scanline.
#[derive(Clone, Debug)]
pub struct GsPair {
    pub s: f64,
    pub forward: Splatted,
    pub backward: Splatted,
}

/// Everything needed to turn an RS pair into GS frames.
#[derive(Clone, Copy, Debug)]
pub struct InversionInputs<'a> {
    pub rs1: &'a Image,
    pub rs2: &'a Image,
    pub weights1: Option<&'a [f64]>,
    pub weights2: Option<&'a [f64]>,
}

/// GS frame pairs for every requested scanline, computed in parallel.
pub fn invert(
    inverter: &Inverter,
    inputs: &InversionInputs,
    scanlines: &[f64],
    model: PropagationModel,
    splat: &SplatConfig,
) -> Result<Vec<GsPair>> {
    scanlines
        .par_iter()
        .map(|&s| {
            Ok(GsPair {
                s,
                forward: inverter.render(
                    inputs.rs1,
                    Direction::Forward,
                    s,
                    model.phi(Direction::Forward),
                    inputs.weights1,
                    splat,
                )?,
                backward: inverter.render(
                    inputs.rs2,
                    Direction::Backward,
                    s,
                    model.phi(Direction::Backward),
                    inputs.weights2,
                    splat,
                )?,
            })
        })
        .collect()
}

/// `count` scanlines evenly spread over `[0, h - 1]`.
pub fn evenly_spaced_scanlines(camera: &CameraModel, count: usize) -> Vec<f64> {
    let last = camera.h() - 1.0;
    match count {
        0 => vec![],
        1 => vec![camera.middle_scanline()],
        n => (0..n).map(|i| last * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rs_flow_closed_form, undistortion_flow_from_geometry, MotionState};
    use nalgebra::{Vector2, Vector3};

    fn setup() -> (CameraModel, RsTiming, DepthMap, MotionState, Inverter) {
        let cam = CameraModel::centered(120.0, 24, 16).unwrap();
        let t = RsTiming::new(0.9).unwrap();
        let d = DepthMap::from_values(24, 16, (0..384).map(|i| 3.0 + 0.01 * i as f64).collect()).unwrap();
        let m = MotionState::velocity(Vector3::new(0.2, 0.1, 0.02), Vector3::new(0.01, -0.005, 0.02));
        let flows: Vec<FlowField> = [Direction::Forward, Direction::Backward]
            .into_iter()
            .map(|dir| {
                FlowField::from_fn(24, 16, FlowKind::OpticalFlow, dir, |c, r| {
                    let p = Vector2::new(c as f64, r as f64);
                    rs_flow_closed_form(&cam, &m.v, &m.omega, &t, p, d.get(c, r)?, dir).ok()
                })
            })
            .collect();
        let inv = Inverter::new(cam, t, flows[0].clone(), flows[1].clone()).unwrap();
        (cam, t, d, m, inv)
    }

    #[test]
    fn matches_geometry_at_every_row() {
        let (cam, t, d, m, inv) = setup();
        for dir in [Direction::Forward, Direction::Backward] {
            for s in [0.0, 5.5, 8.0, 15.0] {
                let u = inv.undistortion_flow(dir, s, None).unwrap();
                let g = undistortion_flow_from_geometry(&cam, &m, &t, &d, s, dir).unwrap();
                assert_eq!(u.valid_count(), 24 * 16);
                for i in 0..u.data.len() {
                    assert!((u.data[i] - g.data[i]).norm() < 1e-9, "{dir:?} s={s} i={i}");
                }
            }
        }
    }

    #[test]
    fn zero_phi_is_bit_identical_to_velocity() {
        let (_, _, _, _, inv) = setup();
        for dir in [Direction::Forward, Direction::Backward] {
            for s in [0.0, 3.25, 8.0, 15.0] {
                let a = inv.undistortion_flow(dir, s, None).unwrap();
                let b = inv.undistortion_flow(dir, s, Some(0.0)).unwrap();
                assert_eq!(a.data, b.data);
                assert_eq!(a.valid, b.valid);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_scanline() {
        let (_, _, _, _, inv) = setup();
        assert!(inv.undistortion_flow(Direction::Forward, 15.5, None).is_err());
        assert!(inv.undistortion_flow(Direction::Forward, -0.1, None).is_err());
    }

    #[test]
    fn scanline_grid() {
        let cam = CameraModel::centered(100.0, 10, 9).unwrap();
        assert_eq!(evenly_spaced_scanlines(&cam, 9), (0..9).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(evenly_spaced_scanlines(&cam, 1), vec![4.5]);
    }

    #[test]
    fn inverse_depth_weights_favour_near_pixels() {
        let (_, _, d, _, inv) = setup();
        let img = Image::new(24, 16, 3);
        let w = splat_weights(WeightMode::InverseDepth, Some(&d), &img, &img, inv.middle_flow(Direction::Forward))
            .unwrap()
            .unwrap();
        assert!(w[0] > w[383]);
        assert!(splat_weights(WeightMode::Uniform, Some(&d), &img, &img, inv.middle_flow(Direction::Forward))
            .unwrap()
            .is_none());
    }
}
