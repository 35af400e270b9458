use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{check_dims, Direction, FlowField, FlowKind};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LkParams {
    pub levels: usize,
    /// Odd window side length.
    pub window: usize,
    pub iterations: usize,
    /// Minimum eigenvalue of the window-averaged structure tensor for a valid vector.
    pub min_eigenvalue: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        Self {
            levels: 4,
            window: 15,
            iterations: 8,
            min_eigenvalue: 1e-5,
        }
    }
}

/// Single-channel f64 raster.
#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_image(img: &Image) -> Self {
        let g = img.to_gray();
        Self {
            w: g.width,
            h: g.height,
            data: g.data.iter().map(|&v| v as f64).collect(),
        }
    }

    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x.floor(), y.floor());
        let (ax, ay) = (x - fx, y - fy);
        let (ix, iy) = (fx as isize, fy as isize);
        let top = self.at(ix, iy) * (1.0 - ax) + self.at(ix + 1, iy) * ax;
        let bot = self.at(ix, iy + 1) * (1.0 - ax) + self.at(ix + 1, iy + 1) * ax;
        top * (1.0 - ay) + bot * ay
    }

    /// 5-tap binomial blur followed by 2x decimation.
    fn downsample(&self) -> Self {
        const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut tmp = vec![0.0; self.w * h];
        for y in 0..h {
            for x in 0..self.w {
                tmp[y * self.w + x] = (0..5).map(|j| K[j] * self.at(x as isize, 2 * y as isize + j as isize - 2)).sum();
            }
        }
        let tmp = Plane {
            w: self.w,
            h,
            data: tmp,
        };
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                data[y * w + x] = (0..5).map(|j| K[j] * tmp.at(2 * x as isize + j as isize - 2, y as isize)).sum();
            }
        }
        Plane { w, h, data }
    }

    fn gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.w * self.h];
        let mut gy = vec![0.0; self.w * self.h];
        for y in 0..self.h as isize {
            for x in 0..self.w as isize {
                let i = y as usize * self.w + x as usize;
                gx[i] = 0.5 * (self.at(x + 1, y) - self.at(x - 1, y));
                gy[i] = 0.5 * (self.at(x, y + 1) - self.at(x, y - 1));
            }
        }
        (gx, gy)
    }
}

/// Box-window sums with clamped borders, normalized by the window area.
fn box_mean(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let n = (2 * r + 1) as f64;
    let clamp = |v: isize, m: usize| v.clamp(0, m as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let mut acc: f64 = (-(r as isize)..=r as isize).map(|d| row[clamp(d, w)]).sum();
        for x in 0..w {
            tmp[y * w + x] = acc / n;
            acc += row[clamp(x as isize + r as isize + 1, w)] - row[clamp(x as isize - r as isize, w)];
        }
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        let mut acc: f64 = (-(r as isize)..=r as isize).map(|d| tmp[clamp(d, h) * w + x]).sum();
        for y in 0..h {
            out[y * w + x] = acc / n;
            acc += tmp[clamp(y as isize + r as isize + 1, h) * w + x] - tmp[clamp(y as isize - r as isize, h) * w + x];
        }
    }
    out
}

/// Dense pyramidal Lucas-Kanade flow from `img1` to `img2` (grayscale).
///
/// Each pixel is tracked coarse to fine with a few Gauss-Newton updates per
/// level. Pixels whose structure tensor is poorly conditioned at the finest
/// level are invalid.
pub fn estimate_flow_lk(img1: &Image, img2: &Image, params: &LkParams) -> Result<FlowField> {
    check_dims(img1.dims(), img2.dims())?;
    let levels = params.levels.max(1);
    let r = params.window / 2;
    let mut pyr1 = vec![Plane::from_image(img1)];
    let mut pyr2 = vec![Plane::from_image(img2)];
    for _ in 1..levels {
        let (a, b) = (pyr1.last().unwrap(), pyr2.last().unwrap());
        if a.w < 2 * params.window || a.h < 2 * params.window {
            break;
        }
        let (a, b) = (a.downsample(), b.downsample());
        pyr1.push(a);
        pyr2.push(b);
    }

    let mut flow: Vec<Vector2<f64>> = Vec::new();
    let mut min_eig = Vec::new();
    for lvl in (0..pyr1.len()).rev() {
        let (p1, p2) = (&pyr1[lvl], &pyr2[lvl]);
        let (w, h) = (p1.w, p1.h);
        flow = if flow.is_empty() {
            vec![Vector2::zeros(); w * h]
        } else {
            upsample(&flow, &pyr1[lvl + 1], w, h)
        };
        let (gx, gy) = p1.gradients();
        let xx = box_mean(&gx.iter().map(|g| g * g).collect::<Vec<_>>(), w, h, r);
        let xy = box_mean(&gx.iter().zip(&gy).map(|(a, b)| a * b).collect::<Vec<_>>(), w, h, r);
        let yy = box_mean(&gy.iter().map(|g| g * g).collect::<Vec<_>>(), w, h, r);
        let tensor = |i: usize| (xx[i], xy[i], yy[i]);
        flow.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, d) in row.iter_mut().enumerate() {
                *d = track(p1, p2, &gx, &gy, tensor(y * w + x), x, y, *d, r, params.iterations);
            }
        });
        if lvl == 0 {
            min_eig = (0..w * h)
                .map(|i| {
                    let tr = xx[i] + yy[i];
                    let disc = ((xx[i] - yy[i]).powi(2) + 4.0 * xy[i] * xy[i]).sqrt();
                    0.5 * (tr - disc)
                })
                .collect();
        }
    }
    let (w, h) = img1.dims();
    Ok(FlowField {
        width: w,
        height: h,
        valid: min_eig.iter().zip(&flow).map(|(e, f)| *e >= params.min_eigenvalue && f.x.is_finite() && f.y.is_finite()).collect(),
        data: flow,
        kind: FlowKind::OpticalFlow,
        direction: Direction::Forward,
    })
}

/// Iterative LK for one pixel: the whole window is warped by the pixel's
/// current displacement `d` and the update solves the 2x2 normal equations.
#[allow(clippy::too_many_arguments)]
fn track(
    p1: &Plane,
    p2: &Plane,
    gx: &[f64],
    gy: &[f64],
    (xx, xy, yy): (f64, f64, f64),
    x: usize,
    y: usize,
    mut d: Vector2<f64>,
    r: usize,
    iterations: usize,
) -> Vector2<f64> {
    let det = xx * yy - xy * xy;
    if det.abs() < 1e-18 {
        return d;
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let r = r as isize;
    for _ in 0..iterations {
        let (mut bx, mut by) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (qx, qy) = (x as isize + dx, y as isize + dy);
                let qc = qx.clamp(0, p1.w as isize - 1) as usize;
                let qr = qy.clamp(0, p1.h as isize - 1) as usize;
                let i = qr * p1.w + qc;
                let e = p1.data[i] - p2.bilinear(qc as f64 + d.x, qr as f64 + d.y);
                bx += gx[i] * e;
                by += gy[i] * e;
            }
        }
        let (bx, by) = (bx / n, by / n);
        let step = Vector2::new((yy * bx - xy * by) / det, (xx * by - xy * bx) / det);
        d += step;
        if step.norm_squared() < 1e-6 {
            break;
        }
    }
    d
}

/// Doubles a coarse flow onto a finer grid of size `w x h`.
fn upsample(coarse: &[Vector2<f64>], coarse_plane: &Plane, w: usize, h: usize) -> Vec<Vector2<f64>> {
    let (cw, ch) = (coarse_plane.w, coarse_plane.h);
    let at = |x: isize, y: isize| coarse[y.clamp(0, ch as isize - 1) as usize * cw + x.clamp(0, cw as isize - 1) as usize];
    let mut out = vec![Vector2::zeros(); w * h];
    for y in 0..h {
        for x in 0..w {
            let (cx, cy) = (x as f64 / 2.0, y as f64 / 2.0);
            let (fx, fy) = (cx.floor(), cy.floor());
            let (ax, ay) = (cx - fx, cy - fy);
            let (ix, iy) = (fx as isize, fy as isize);
            let v = (at(ix, iy) * (1.0 - ax) + at(ix + 1, iy) * ax) * (1.0 - ay)
                + (at(ix, iy + 1) * (1.0 - ax) + at(ix + 1, iy + 1) * ax) * ay;
            out[y * w + x] = v * 2.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_mean_of_constant() {
        let v = box_mean(&[2.0; 35], 7, 5, 2);
        assert!(v.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn flat_images_are_invalid() {
        let a = Image::new(32, 32, 1);
        let f = estimate_flow_lk(&a, &a, &LkParams::default()).unwrap();
        assert_eq!(f.valid_count(), 0);
    }
}
