//! Python bindings for the rolling-shutter toolkit.
//!
//! Images, flows and depth maps cross the boundary as flat lists so the module
//! has no numpy dependency; `to_list` / constructors use row-major order.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use unroll_core::estimate::{self, LkParams, RobustParams};
use unroll_core::geometry;
use unroll_core::pipeline::{self, InversionInputs, PropagationModel};
use unroll_core::scene::SceneConfig;
use unroll_core::warp::{SplatConfig, WeightMode};
use unroll_core::{io, metrics, selfcheck};

fn to_py(e: unroll_core::Error) -> PyErr {
    match e {
        unroll_core::Error::Io(_)
        | unroll_core::Error::BadMagic { .. }
        | unroll_core::Error::TruncatedFile { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn direction(name: &str) -> PyResult<unroll_core::Direction> {
    match name {
        "forward" => Ok(unroll_core::Direction::Forward),
        "backward" => Ok(unroll_core::Direction::Backward),
        _ => Err(PyValueError::new_err(format!("direction must be 'forward' or 'backward', got {name:?}"))),
    }
}

fn direction_name(d: unroll_core::Direction) -> &'static str {
    match d {
        unroll_core::Direction::Forward => "forward",
        unroll_core::Direction::Backward => "backward",
    }
}

fn weight_mode(name: &str) -> PyResult<WeightMode> {
    match name {
        "uniform" => Ok(WeightMode::Uniform),
        "inverse_depth" => Ok(WeightMode::InverseDepth),
        "brightness" => Ok(WeightMode::Brightness),
        _ => Err(PyValueError::new_err(format!("unknown weight mode {name:?}"))),
    }
}

/// Pinhole camera; the principal point defaults to the image centre.
#[pyclass(module = "unroll", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Camera(unroll_core::CameraModel);

#[pymethods]
impl Camera {
    #[new]
    #[pyo3(signature = (focal, width, height, principal=None))]
    fn new(focal: f64, width: usize, height: usize, principal: Option<(f64, f64)>) -> PyResult<Self> {
        let cam = match principal {
            Some((x, y)) => unroll_core::CameraModel::new(focal, nalgebra::Vector2::new(x, y), width, height),
            None => unroll_core::CameraModel::centered(focal, width, height),
        };
        cam.map(Camera).map_err(to_py)
    }

    #[getter]
    fn focal(&self) -> f64 {
        self.0.focal_length
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn principal(&self) -> (f64, f64) {
        (self.0.principal_point.x, self.0.principal_point.y)
    }

    #[getter]
    fn middle_scanline(&self) -> f64 {
        self.0.middle_scanline()
    }

    fn __repr__(&self) -> String {
        format!("Camera(focal={}, width={}, height={})", self.0.focal_length, self.0.width, self.0.height)
    }
}

#[pyclass(module = "unroll", skip_from_py_object)]
#[derive(Clone)]
struct Image(unroll_core::Image);

#[pymethods]
impl Image {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> PyResult<Self> {
        unroll_core::Image::from_data(width, height, channels, data).map(Image).map_err(to_py)
    }

    #[staticmethod]
    fn read_png(path: PathBuf) -> PyResult<Self> {
        io::read_png(&path).map(Image).map_err(to_py)
    }

    fn write_png(&self, path: PathBuf) -> PyResult<()> {
        io::write_png(&path, &self.0).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels
    }

    fn pixel(&self, col: usize, row: usize) -> PyResult<Vec<f32>> {
        if col >= self.0.width || row >= self.0.height {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        Ok(self.0.pixel(col, row).to_vec())
    }

    fn to_list(&self) -> Vec<f32> {
        self.0.data.clone()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}x{})", self.0.width, self.0.height, self.0.channels)
    }
}

/// Dense flow field; invalid vectors are reported as `None`.
#[pyclass(module = "unroll", skip_from_py_object)]
#[derive(Clone)]
struct Flow(unroll_core::FlowField);

#[pymethods]
impl Flow {
    #[staticmethod]
    #[pyo3(signature = (path, direction="forward"))]
    fn read_flo(path: PathBuf, direction: &str) -> PyResult<Self> {
        let d = self::direction(direction)?;
        let f = io::read_flo(&path).map_err(to_py)?;
        Ok(Flow(f.with_kind(unroll_core::FlowKind::OpticalFlow, d)))
    }

    fn write_flo(&self, path: PathBuf) -> PyResult<()> {
        io::write_flo(&path, &self.0).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn direction(&self) -> &'static str {
        direction_name(self.0.direction)
    }

    #[getter]
    fn target_scanline(&self) -> Option<f64> {
        self.0.target_scanline()
    }

    fn get(&self, col: usize, row: usize) -> PyResult<Option<(f64, f64)>> {
        if col >= self.0.width || row >= self.0.height {
            return Err(PyValueError::new_err("pixel out of range"));
        }
        let v = self.0.get(col, row);
        Ok(self.0.is_valid(col, row).then_some((v.x, v.y)))
    }

    fn to_list(&self) -> Vec<Option<(f64, f64)>> {
        self.0
            .data
            .iter()
            .zip(&self.0.valid)
            .map(|(v, ok)| ok.then_some((v.x, v.y)))
            .collect()
    }

    fn max_magnitude(&self) -> f64 {
        self.0.max_magnitude()
    }
}

#[pyclass(module = "unroll", skip_from_py_object)]
#[derive(Clone)]
struct Depth(unroll_core::DepthMap);

#[pymethods]
impl Depth {
    #[new]
    fn new(width: usize, height: usize, values: Vec<f64>) -> PyResult<Self> {
        unroll_core::DepthMap::from_values(width, height, values).map(Depth).map_err(to_py)
    }

    #[staticmethod]
    fn read_pfm(path: PathBuf) -> PyResult<Self> {
        io::read_pfm(&path).map(Depth).map_err(to_py)
    }

    fn write_pfm(&self, path: PathBuf) -> PyResult<()> {
        io::write_pfm(&path, &self.0).map_err(to_py)
    }

    fn get(&self, col: usize, row: usize) -> Option<f64> {
        self.0.get(col, row)
    }
}

/// Synthetic textured-plane scene loaded from a TOML description.
#[pyclass(module = "unroll")]
struct Scene(unroll_core::scene::Scene);

#[pymethods]
impl Scene {
    #[staticmethod]
    #[pyo3(signature = (text, base_dir=None))]
    fn from_toml(text: &str, base_dir: Option<PathBuf>) -> PyResult<Self> {
        let cfg = SceneConfig::from_toml_str(text).map_err(to_py)?;
        cfg.build(base_dir.as_deref()).map(Scene).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let cfg = SceneConfig::load(&path).map_err(to_py)?;
        cfg.build(path.parent()).map(Scene).map_err(to_py)
    }

    #[getter]
    fn camera(&self) -> Camera {
        Camera(self.0.camera)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.timing.gamma()
    }

    fn render_gs(&self, py: Python<'_>, frame: u32, s: f64) -> PyResult<(Image, Depth)> {
        let gs = py.detach(|| self.0.render_gs(frame, s)).map_err(to_py)?;
        Ok((Image(gs.image), Depth(gs.depth)))
    }

    fn compose_rs(&self, py: Python<'_>, frame: u32) -> PyResult<(Image, Depth)> {
        let rs = py.detach(|| self.0.compose_rs(frame)).map_err(to_py)?;
        Ok((Image(rs.image), Depth(rs.depth)))
    }

    /// Closed-form (forward, backward) optical flows between RS frames 1 and 2.
    fn gt_optical_flow(&self, py: Python<'_>) -> PyResult<(Flow, Flow)> {
        let (f, b) = py.detach(|| self.0.gt_optical_flow()).map_err(to_py)?;
        Ok((Flow(f), Flow(b)))
    }

    fn gt_occlusion(&self, py: Python<'_>, frame: u32, s: f64) -> Vec<bool> {
        py.detach(|| self.0.gt_occlusion(frame, s))
    }
}

/// Turns an RS pair and its optical flows into GS frames at any scanline.
#[pyclass(module = "unroll")]
struct Inverter {
    inner: pipeline::Inverter,
    // Optical flows kept for brightness-constancy splat weights.
    forward: unroll_core::FlowField,
    backward: unroll_core::FlowField,
}

#[pymethods]
impl Inverter {
    #[new]
    fn new(camera: &Camera, gamma: f64, forward: &Flow, backward: &Flow) -> PyResult<Self> {
        let timing = unroll_core::RsTiming::new(gamma).map_err(to_py)?;
        let inner = pipeline::Inverter::new(camera.0, timing, forward.0.clone(), backward.0.clone()).map_err(to_py)?;
        Ok(Inverter {
            inner,
            forward: forward.0.clone(),
            backward: backward.0.clone(),
        })
    }

    /// Undistortion flow of the RS frame `direction` starts from, towards scanline `s`.
    #[pyo3(signature = (direction, s, phi=None))]
    fn undistortion_flow(&self, direction: &str, s: f64, phi: Option<f64>) -> PyResult<Flow> {
        self.inner
            .undistortion_flow(self::direction(direction)?, s, phi)
            .map(Flow)
            .map_err(to_py)
    }

    /// Returns `[(s, gs1, valid1, gs2, valid2), ...]`. Depth maps switch the
    /// splat weights to inverse depth; otherwise brightness constancy is used.
    #[pyo3(signature = (rs1, rs2, scanlines, phi_forward=None, phi_backward=None, depth1=None, depth2=None, weights=None, sharpness=10.0))]
    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    fn invert(
        &self,
        py: Python<'_>,
        rs1: &Image,
        rs2: &Image,
        scanlines: Vec<f64>,
        phi_forward: Option<f64>,
        phi_backward: Option<f64>,
        depth1: Option<&Depth>,
        depth2: Option<&Depth>,
        weights: Option<&str>,
        sharpness: f64,
    ) -> PyResult<Vec<(f64, Image, Vec<bool>, Image, Vec<bool>)>> {
        let splat = SplatConfig {
            weight_mode: weight_mode(weights.unwrap_or("inverse_depth"))?,
            sharpness,
            ..Default::default()
        };
        splat.validate().map_err(to_py)?;
        let model = match (phi_forward, phi_backward) {
            (None, None) => PropagationModel::Velocity,
            (f, b) => PropagationModel::Acceleration {
                phi_forward: f.unwrap_or(0.0),
                phi_backward: b.unwrap_or(0.0),
            },
        };
        let w1 = pipeline::splat_weights(splat.weight_mode, depth1.map(|d| &d.0), &rs1.0, &rs2.0, &self.forward).map_err(to_py)?;
        let w2 = pipeline::splat_weights(splat.weight_mode, depth2.map(|d| &d.0), &rs2.0, &rs1.0, &self.backward).map_err(to_py)?;
        let inputs = InversionInputs {
            rs1: &rs1.0,
            rs2: &rs2.0,
            weights1: w1.as_deref(),
            weights2: w2.as_deref(),
        };
        let pairs = py
            .detach(|| pipeline::invert(&self.inner, &inputs, &scanlines, model, &splat))
            .map_err(to_py)?;
        Ok(pairs
            .into_iter()
            .map(|p| (p.s, Image(p.forward.image), p.forward.valid, Image(p.backward.image), p.backward.valid))
            .collect())
    }
}

/// Pose weight of scanline `s` in `frame` (1-based) under acceleration factor `k`.
#[pyfunction]
#[pyo3(signature = (frame, s, gamma, height, k=0.0))]
fn scanline_time_weight(frame: u32, s: f64, gamma: f64, height: usize, k: f64) -> PyResult<f64> {
    let timing = unroll_core::RsTiming::new(gamma).map_err(to_py)?;
    let cam = unroll_core::CameraModel::centered(1.0, 2, height).map_err(to_py)?;
    geometry::scanline_time_weight(frame, s, &timing, &cam, k).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (s, eta, gamma, height, direction="forward", k=0.0))]
fn undistortion_factor(s: f64, eta: f64, gamma: f64, height: usize, direction: &str, k: f64) -> PyResult<f64> {
    let timing = unroll_core::RsTiming::new(gamma).map_err(to_py)?;
    let cam = unroll_core::CameraModel::centered(1.0, 2, height).map_err(to_py)?;
    geometry::undistortion_factor(s, eta, &timing, &cam, self::direction(direction)?, k).map_err(to_py)
}

/// Ratio retargeting an undistortion vector on row `eta` from scanline `s1` to `s2`.
#[pyfunction]
#[pyo3(signature = (s1, s2, eta, height, phi=None))]
fn propagation_ratio(s1: f64, s2: f64, eta: f64, height: usize, phi: Option<f64>) -> f64 {
    geometry::propagation_ratio(s1, s2, eta, phi, height as f64)
}

#[pyfunction]
#[pyo3(signature = (a, b, mask=None))]
fn psnr(a: &Image, b: &Image, mask: Option<Vec<bool>>) -> PyResult<f64> {
    metrics::psnr(&a.0, &b.0, mask.as_deref()).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, mask=None))]
fn ssim(a: &Image, b: &Image, mask: Option<Vec<bool>>) -> PyResult<f64> {
    metrics::ssim(&a.0, &b.0, mask.as_deref()).map_err(to_py)
}

/// Least-squares (or consensus when `robust`) camera motion from a flow and
/// the depth of its source frame. Returns `(v, omega, residual_px)`.
#[pyfunction]
#[pyo3(signature = (flow, depth, camera, gamma, robust=false, seed=0))]
#[allow(clippy::type_complexity)]
fn estimate_motion(
    py: Python<'_>,
    flow: &Flow,
    depth: &Depth,
    camera: &Camera,
    gamma: f64,
    robust: bool,
    seed: u64,
) -> PyResult<((f64, f64, f64), (f64, f64, f64), f64)> {
    let timing = unroll_core::RsTiming::new(gamma).map_err(to_py)?;
    let fit = py
        .detach(|| {
            if robust {
                let params = RobustParams {
                    seed,
                    ..Default::default()
                };
                estimate::estimate_motion_robust(&flow.0, &depth.0, &camera.0, &timing, &params).map(|r| r.fit)
            } else {
                estimate::estimate_motion_ls(&flow.0, &depth.0, &camera.0, &timing)
            }
        })
        .map_err(to_py)?;
    Ok(((fit.v.x, fit.v.y, fit.v.z), (fit.omega.x, fit.omega.y, fit.omega.z), fit.residual))
}

#[pyfunction]
#[pyo3(signature = (img1, img2, levels=4, window=15))]
fn estimate_flow_lk(py: Python<'_>, img1: &Image, img2: &Image, levels: usize, window: usize) -> PyResult<Flow> {
    let params = LkParams {
        levels,
        window,
        ..Default::default()
    };
    py.detach(|| estimate::estimate_flow_lk(&img1.0, &img2.0, &params))
        .map(Flow)
        .map_err(to_py)
}

/// Runs the invariant suite; returns `[(name, passed, detail), ...]`.
#[pyfunction]
#[pyo3(signature = (seed=2024, motions=1000))]
fn run_selfcheck(py: Python<'_>, seed: u64, motions: usize) -> Vec<(String, bool, String)> {
    let config = selfcheck::SelfcheckConfig {
        seed,
        motions,
        ..Default::default()
    };
    py.detach(|| selfcheck::run_selfcheck(&config))
        .into_iter()
        .map(|r| (r.name.to_string(), r.passed, r.detail))
        .collect()
}

#[pymodule]
fn unroll(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Camera>()?;
    m.add_class::<Image>()?;
    m.add_class::<Flow>()?;
    m.add_class::<Depth>()?;
    m.add_class::<Scene>()?;
    m.add_class::<Inverter>()?;
    m.add_function(wrap_pyfunction!(scanline_time_weight, m)?)?;
    m.add_function(wrap_pyfunction!(undistortion_factor, m)?)?;
    m.add_function(wrap_pyfunction!(propagation_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_motion, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_flow_lk, m)?)?;
    m.add_function(wrap_pyfunction!(run_selfcheck, m)?)?;
    Ok(())
}
