//! Forward splatting and backward warping of images along flow fields.

use crate::error::{Error, Result};
use crate::geometry::FlowField;
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// All sources weigh the same.
    Uniform,
    /// Nearer sources win: weight `mean depth / depth`.
    #[default]
    InverseDepth,
    /// Brightness constancy: weight is minus the photometric residual along the optical flow.
    Brightness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HolePolicy {
    /// Leave holes black and invalid.
    #[default]
    MarkInvalid,
    /// Copy the nearest splatted pixel into holes (still reported invalid).
    NearestFill,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatConfig {
    pub weight_mode: WeightMode,
    /// Softmax sharpness applied to the per-pixel weights.
    pub sharpness: f64,
    pub hole_policy: HolePolicy,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            weight_mode: WeightMode::default(),
            sharpness: 10.0,
            hole_policy: HolePolicy::default(),
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sharpness > 0.0) || !self.sharpness.is_finite() {
            return Err(Error::InvalidParameter(format!("sharpness must be positive, got {}", self.sharpness)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Splatted {
    pub image: Image,
    /// True where at least one source landed.
    pub valid: Vec<bool>,
    /// Accumulated bilinear footprint per destination pixel.
    pub mass: Vec<f64>,
}

/// Scatters every valid source pixel to `x + flow(x)` with a bilinear footprint.
/// Collisions are blended with `exp(sharpness * weight)` normalised per
/// destination. Deterministic and single pass over sources in raster order.
pub fn splat_forward(src: &Image, flow: &FlowField, weights: Option<&[f64]>, config: &SplatConfig) -> Result<Splatted> {
    config.validate()?;
    let (w, h) = src.dims();
    if flow.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            actual: flow.dims(),
        });
    }
    if let Some(wt) = weights {
        if wt.len() != w * h {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: (wt.len(), 1),
            });
        }
    }
    let ch = src.channels;
    let logit = |i: usize| weights.map_or(0.0, |wt| config.sharpness * wt[i]);

    // Footprint of source i: up to four (destination, bilinear weight) pairs.
    let footprint = |i: usize| -> [(usize, f64); 4] {
        let mut out = [(usize::MAX, 0.0); 4];
        let (col, row) = (i % w, i / w);
        let d = flow.data[i];
        let (x, y) = (col as f64 + d.x, row as f64 + d.y);
        if !x.is_finite() || !y.is_finite() {
            return out;
        }
        let (fx, fy) = (x.floor(), y.floor());
        let (ax, ay) = (x - fx, y - fy);
        let taps = [
            (fx, fy, (1.0 - ax) * (1.0 - ay)),
            (fx + 1.0, fy, ax * (1.0 - ay)),
            (fx, fy + 1.0, (1.0 - ax) * ay),
            (fx + 1.0, fy + 1.0, ax * ay),
        ];
        for (k, (tx, ty, b)) in taps.into_iter().enumerate() {
            if b > 0.0 && tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64 {
                out[k] = (ty as usize * w + tx as usize, b);
            }
        }
        out
    };

    // Per-destination maximum logit keeps the exponentials in range.
    let mut max_logit = vec![f64::NEG_INFINITY; w * h];
    if weights.is_some() {
        for i in 0..w * h {
            if !flow.valid[i] {
                continue;
            }
            let l = logit(i);
            for (d, b) in footprint(i) {
                if b > 0.0 && l > max_logit[d] {
                    max_logit[d] = l;
                }
            }
        }
    }

    let mut num = vec![0.0f64; w * h * ch];
    let mut den = vec![0.0f64; w * h];
    let mut mass = vec![0.0f64; w * h];
    for i in 0..w * h {
        if !flow.valid[i] {
            continue;
        }
        let l = logit(i);
        let color = &src.data[i * ch..(i + 1) * ch];
        for (d, b) in footprint(i) {
            if b <= 0.0 {
                continue;
            }
            let e = if weights.is_some() { (l - max_logit[d]).exp() } else { 1.0 };
            let wgt = b * e;
            mass[d] += b;
            den[d] += wgt;
            for c in 0..ch {
                num[d * ch + c] += wgt * color[c] as f64;
            }
        }
    }

    let mut image = Image::new(w, h, ch);
    let mut valid = vec![false; w * h];
    for d in 0..w * h {
        if den[d] > 0.0 {
            valid[d] = true;
            for c in 0..ch {
                image.data[d * ch + c] = (num[d * ch + c] / den[d]) as f32;
            }
        }
    }
    if config.hole_policy == HolePolicy::NearestFill {
        nearest_fill(&mut image, &valid);
    }
    Ok(Splatted { image, valid, mass })
}

/// Fills invalid pixels with the colour of the nearest valid pixel
/// (city-block distance, two-pass sweep).
fn nearest_fill(image: &mut Image, valid: &[bool]) {
    let (w, h) = image.dims();
    if !valid.iter().any(|&v| v) {
        return;
    }
    let mut src: Vec<usize> = (0..w * h).collect();
    let mut dist: Vec<u32> = valid.iter().map(|&v| if v { 0 } else { u32::MAX }).collect();
    let relax = |i: usize, j: usize, dist: &mut Vec<u32>, src: &mut Vec<usize>| {
        if dist[j] != u32::MAX && dist[j] + 1 < dist[i] {
            dist[i] = dist[j] + 1;
            src[i] = src[j];
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x > 0 {
                relax(i, i - 1, &mut dist, &mut src);
            }
            if y > 0 {
                relax(i, i - w, &mut dist, &mut src);
            }
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if x + 1 < w {
                relax(i, i + 1, &mut dist, &mut src);
            }
            if y + 1 < h {
                relax(i, i + w, &mut dist, &mut src);
            }
        }
    }
    let ch = image.channels;
    for i in 0..w * h {
        if !valid[i] {
            let s = src[i];
            for c in 0..ch {
                image.data[i * ch + c] = image.data[s * ch + c];
            }
        }
    }
}

/// `out(x) = src(x + flow(x))`, bilinear, clamped at the border. The mask is
/// false where the sample fell outside the image or the flow was invalid.
pub fn backward_warp(src: &Image, flow: &FlowField) -> Result<(Image, Vec<bool>)> {
    let (w, h) = src.dims();
    if flow.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            actual: flow.dims(),
        });
    }
    let mut out = Image::new(w, h, src.channels);
    let mut inside = vec![false; w * h];
    let ch = src.channels;
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let d = flow.data[i];
            let (x, y) = (col as f64 + d.x, row as f64 + d.y);
            src.sample_bilinear(x, y, &mut out.data[i * ch..(i + 1) * ch]);
            inside[i] = flow.valid[i] && x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
        }
    }
    Ok((out, inside))
}
