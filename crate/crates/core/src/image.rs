//! Interleaved floating point rasters.
//!
//! Samples are nominally in `[0, 1]`; 8-bit files map `v -> v / 255`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidParameter(format!(
                "buffer of {} samples does not fit {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel(&self, col: usize, row: usize) -> &[f32] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, col: usize, row: usize) -> &mut [f32] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let stride = self.width * self.channels;
        &self.data[row * stride..(row + 1) * stride]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f32] {
        let stride = self.width * self.channels;
        &mut self.data[row * stride..(row + 1) * stride]
    }

    /// Luma (Rec. 601) as a single channel image. Single channel inputs are copied.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|p| {
                if p.len() >= 3 {
                    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
                } else {
                    p.iter().sum::<f32>() / p.len() as f32
                }
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear sample with clamp-to-edge addressing. Writes `channels` values into `out`.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f32]) {
        let xmax = (self.width - 1) as f64;
        let ymax = (self.height - 1) as f64;
        let x = x.clamp(0.0, xmax);
        let y = y.clamp(0.0, ymax);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = (x - x0 as f64) as f32;
        let ay = (y - y0 as f64) as f32;
        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        for c in 0..self.channels {
            let top = p00[c] + ax * (p10[c] - p00[c]);
            let bottom = p01[c] + ax * (p11[c] - p01[c]);
            out[c] = top + ay * (bottom - top);
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn check_same_dims(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.channels != other.channels {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: (other.width, other.height),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_midpoint() {
        let img = Image::from_data(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let mut out = [0.0];
        img.sample_bilinear(0.25, 0.0, &mut out);
        assert!((out[0] - 0.25).abs() < 1e-7);
        img.sample_bilinear(5.0, -3.0, &mut out);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn gray_of_white_is_one() {
        let img = Image::from_data(1, 1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        assert!((img.to_gray().data[0] - 1.0).abs() < 1e-6);
    }
}
