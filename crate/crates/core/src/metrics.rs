//! Image quality metrics on `[0, 1]` images.

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported PSNR for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio with peak value 1, over pixels where `mask` is
/// true (all pixels when absent).
pub fn psnr(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    a.check_same_dims(b)?;
    let n_px = a.width * a.height;
    if let Some(m) = mask {
        if m.len() != n_px {
            return Err(Error::DimensionMismatch {
                expected: (a.width, a.height),
                actual: (m.len(), 1),
            });
        }
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for i in 0..n_px {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let c = a.channels;
        for k in i * c..(i + 1) * c {
            let d = a.data[k] as f64 - b.data[k] as f64;
            sum += d * d;
        }
        count += c;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    /// Odd Gaussian window size (sigma 1.5).
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Mean SSIM over all fully-inside windows (and, with a mask, only windows
/// whose pixels are all selected), averaged over channels.
pub fn ssim(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    ssim_with(a, b, mask, SsimParams::default())
}

pub fn ssim_with(a: &Image, b: &Image, mask: Option<&[bool]>, params: SsimParams) -> Result<f64> {
    a.check_same_dims(b)?;
    let (w, h) = a.dims();
    let win = params.window;
    if win.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("SSIM window must be odd, got {win}")));
    }
    if win > w || win > h {
        return Err(Error::InvalidParameter(format!("SSIM window {win} exceeds image {w}x{h}")));
    }
    let kernel = gaussian_kernel(win, 1.5);
    let (ow, oh) = (w - win + 1, h - win + 1);
    let window_ok: Vec<bool> = match mask {
        None => vec![true; ow * oh],
        Some(m) => {
            if m.len() != w * h {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    actual: (m.len(), 1),
                });
            }
            windows_fully_selected(m, w, h, win)
        }
    };
    let n_windows = window_ok.iter().filter(|&&x| x).count();
    if n_windows == 0 {
        return Err(Error::EmptyMask);
    }
    let c1 = (params.k1 * 1.0).powi(2);
    let c2 = (params.k2 * 1.0).powi(2);
    let mut total = 0.0;
    for ch in 0..a.channels {
        let pa: Vec<f64> = a.data.iter().skip(ch).step_by(a.channels).map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.data.iter().skip(ch).step_by(b.channels).map(|&v| v as f64).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, w, h, &kernel);
        let mu_b = filter_valid(&pb, w, h, &kernel);
        let e_aa = filter_valid(&aa, w, h, &kernel);
        let e_bb = filter_valid(&bb, w, h, &kernel);
        let e_ab = filter_valid(&ab, w, h, &kernel);
        let mut sum = 0.0;
        for i in 0..ow * oh {
            if !window_ok[i] {
                continue;
            }
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / n_windows as f64;
    }
    Ok(total / a.channels as f64)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" correlation: output is `(w - n + 1) x (h - n + 1)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = row[x..x + n].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| tmp[(y + j) * ow + x] * k[j]).sum();
        }
    }
    out
}

fn windows_fully_selected(mask: &[bool], w: usize, h: usize, n: usize) -> Vec<bool> {
    // Summed-area table of unselected pixels.
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * (w + 1) + x + 1] = u32::from(!mask[y * w + x]) + sat[y * (w + 1) + x + 1]
                + sat[(y + 1) * (w + 1) + x]
                - sat[y * (w + 1) + x];
        }
    }
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut out = vec![false; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let s = sat[(y + n) * (w + 1) + x + n] + sat[y * (w + 1) + x]
                - sat[y * (w + 1) + x + n]
                - sat[(y + n) * (w + 1) + x];
            out[y * ow + x] = s == 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize) -> Image {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f32, (i / w) as f32);
                if ((x / 4.0).floor() + (y / 4.0).floor()) as i32 % 2 == 0 { 0.9 } else { 0.1 }
            })
            .collect();
        Image::from_data(w, h, 1, data).unwrap()
    }

    #[test]
    fn psnr_identical_is_capped() {
        let a = pattern(16, 16);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_one_level_everywhere() {
        let a = Image::from_data(4, 4, 3, vec![100.0 / 255.0; 48]).unwrap();
        let b = a.map(|v| v + 1.0 / 255.0);
        let p = psnr(&a, &b, None).unwrap();
        // 20 log10(255) = 48.1308
        assert!((p - 48.1308).abs() < 1e-3, "{p}");
    }

    #[test]
    fn psnr_mask_errors() {
        let a = pattern(4, 4);
        assert!(matches!(psnr(&a, &a, Some(&[false; 16])), Err(Error::EmptyMask)));
        assert!(psnr(&a, &pattern(5, 4), None).is_err());
    }

    #[test]
    fn masking_out_damage_raises_psnr() {
        let a = pattern(16, 16);
        let mut b = a.clone();
        for i in 0..16 {
            b.data[i] = 0.0;
        }
        let mask: Vec<bool> = (0..256).map(|i| i >= 16).collect();
        assert!(psnr(&a, &b, Some(&mask)).unwrap() >= psnr(&a, &b, None).unwrap());
    }

    #[test]
    fn ssim_identity_negation_symmetry() {
        let a = pattern(32, 24);
        assert!((ssim(&a, &a, None).unwrap() - 1.0).abs() < 1e-12);
        let neg = a.map(|v| 1.0 - v);
        let s = ssim(&a, &neg, None).unwrap();
        assert!(s < 0.3, "{s}");
        let mut b = a.clone();
        b.data[40] = 0.3;
        assert_eq!(ssim(&a, &b, None).unwrap(), ssim(&b, &a, None).unwrap());
    }

    #[test]
    fn ssim_mask_windows() {
        let a = pattern(24, 24);
        let mut mask = vec![true; 24 * 24];
        mask[0] = false;
        assert!(ssim(&a, &a, Some(&mask)).is_ok());
        assert!(matches!(ssim(&a, &a, Some(&vec![false; 576])), Err(Error::EmptyMask)));
    }
}
