use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{propagate, CameraModel, FlowField};
use crate::image::Image;
use crate::warp::{splat_forward, SplatConfig};

/// Search settings for the acceleration parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiSearch {
    pub range: (f64, f64),
    /// Number of coarse grid samples.
    pub grid: usize,
    /// Final bracket width of the golden-section refinement.
    pub tolerance: f64,
    /// A fit must beat `phi = 0` by more than this to count as improving.
    pub margin: f64,
}

impl Default for PhiSearch {
    fn default() -> Self {
        Self {
            range: (-1.9, 4.0),
            grid: 60,
            tolerance: 1e-4,
            margin: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiFit {
    pub phi: f64,
    /// Masked mean squared error at `phi`.
    pub objective: f64,
    pub objective_at_zero: f64,
    /// Set when the best fit is no better than the constant velocity model.
    pub non_improving: bool,
}

/// Fraction of the `phi = 0` coverage a candidate must keep to be scored.
const MIN_COVERAGE: f64 = 0.5;

struct Objective<'a> {
    rs: &'a Image,
    u_m: &'a FlowField,
    camera: &'a CameraModel,
    reference_s: f64,
    reference: &'a Image,
    weights: Option<&'a [f64]>,
    splat: &'a SplatConfig,
    min_valid: usize,
}

impl Objective<'_> {
    /// Returns (masked MSE, number of scored pixels).
    fn eval(&self, phi: f64) -> Result<(f64, usize)> {
        let u = propagate(self.u_m, self.reference_s, Some(phi), self.camera)?;
        let out = splat_forward(self.rs, &u, self.weights, self.splat)?;
        let ch = self.rs.channels;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, _) in out.valid.iter().enumerate().filter(|(_, v)| **v) {
            for c in i * ch..(i + 1) * ch {
                let d = out.image.data[c] as f64 - self.reference.data[c] as f64;
                sum += d * d;
            }
            n += 1;
        }
        if n == 0 || n < self.min_valid {
            return Ok((f64::INFINITY, n));
        }
        Ok((sum / (n * ch) as f64, n))
    }

    fn value(&self, phi: f64) -> f64 {
        self.eval(phi).map_or(f64::INFINITY, |(v, _)| v)
    }
}

/// Fits the acceleration parameter of one direction: propagates the
/// middle-scanline undistortion flow `u_m` to `reference_s` for each candidate,
/// splats `rs` with it and compares against the reference frame. Coarse grid
/// then golden-section refinement around the best grid point.
#[allow(clippy::too_many_arguments)]
pub fn estimate_phi_single(
    rs: &Image,
    u_m: &FlowField,
    camera: &CameraModel,
    reference_s: f64,
    reference: &Image,
    weights: Option<&[f64]>,
    splat: &SplatConfig,
    search: &PhiSearch,
) -> Result<PhiFit> {
    let (lo, hi) = search.range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EmptySearchRange { lo, hi });
    }
    if search.grid < 3 || !(search.tolerance > 0.0) {
        return Err(Error::InvalidParameter("phi search needs at least 3 grid points and a positive tolerance".into()));
    }
    rs.check_same_dims(reference)?;
    let mut objective = Objective {
        rs,
        u_m,
        camera,
        reference_s,
        reference,
        weights,
        splat,
        min_valid: 0,
    };
    let (at_zero, coverage) = objective.eval(0.0)?;
    objective.min_valid = (coverage as f64 * MIN_COVERAGE) as usize;

    let step = (hi - lo) / (search.grid - 1) as f64;
    let grid: Vec<f64> = (0..search.grid).map(|i| lo + step * i as f64).collect();
    let values: Vec<f64> = grid.par_iter().map(|&p| objective.value(p)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective.value(c), objective.value(d));
    while b - a > search.tolerance {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective.value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective.value(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut candidates = [(mid, objective.value(mid)), (grid[best], values[best])];
    candidates.sort_by(|x, y| x.1.total_cmp(&y.1));
    let (phi, value) = candidates[0];
    Ok(PhiFit {
        phi,
        objective: value,
        objective_at_zero: at_zero,
        non_improving: value >= at_zero - search.margin,
    })
}

/// Fits the forward and backward acceleration parameters independently.
/// `u1m` / `u2m` target the middle scanline; `ref1` / `ref2` are the GS frames
/// at `reference_s` of frames 1 and 2.
#[allow(clippy::too_many_arguments)]
pub fn estimate_phi(
    rs1: &Image,
    rs2: &Image,
    u1m: &FlowField,
    u2m: &FlowField,
    camera: &CameraModel,
    reference_s: f64,
    ref1: &Image,
    ref2: &Image,
    splat: &SplatConfig,
    search: &PhiSearch,
) -> Result<(PhiFit, PhiFit)> {
    let f = estimate_phi_single(rs1, u1m, camera, reference_s, ref1, None, splat, search)?;
    let b = estimate_phi_single(rs2, u2m, camera, reference_s, ref2, None, splat, search)?;
    Ok((f, b))
}
