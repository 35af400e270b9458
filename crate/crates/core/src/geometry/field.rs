use nalgebra::Vector2;

use super::{CameraModel, Direction};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowKind {
    OpticalFlow,
    /// Displacement from an RS frame onto the GS canvas of the given scanline.
    UndistortionFlow { target_scanline: f64 },
}

/// Dense per-pixel displacement field in pixels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vector2<f64>>,
    pub kind: FlowKind,
    pub direction: Direction,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize, kind: FlowKind, direction: Direction) -> Self {
        Self {
            width,
            height,
            data: vec![Vector2::zeros(); width * height],
            kind,
            direction,
            valid: vec![true; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        kind: FlowKind,
        direction: Direction,
        mut f: impl FnMut(usize, usize) -> Option<Vector2<f64>>,
    ) -> Self {
        let mut out = Self::zeros(width, height, kind, direction);
        for row in 0..height {
            for col in 0..width {
                let i = row * width + col;
                match f(col, row) {
                    Some(u) => out.data[i] = u,
                    None => out.valid[i] = false,
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Vector2<f64> {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn with_kind(mut self, kind: FlowKind, direction: Direction) -> Self {
        self.kind = kind;
        self.direction = direction;
        self
    }

    pub fn target_scanline(&self) -> Option<f64> {
        match self.kind {
            FlowKind::UndistortionFlow { target_scanline } => Some(target_scanline),
            FlowKind::OpticalFlow => None,
        }
    }

    pub fn check_camera(&self, camera: &CameraModel) -> Result<()> {
        check_dims((camera.width, camera.height), self.dims())
    }

    /// Bilinear sample of the field at a real position; `None` when any
    /// contributing neighbour is invalid or the position is outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> Option<Vector2<f64>> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let ax = x - x0 as f64;
        let ay = y - y0 as f64;
        let mut acc = Vector2::zeros();
        for (dx, dy, w) in [
            (0, 0, (1.0 - ax) * (1.0 - ay)),
            (1, 0, ax * (1.0 - ay)),
            (0, 1, (1.0 - ax) * ay),
            (1, 1, ax * ay),
        ] {
            if w == 0.0 {
                continue;
            }
            if !self.is_valid(x0 + dx, y0 + dy) {
                return None;
            }
            acc += self.get(x0 + dx, y0 + dy) * w;
        }
        Some(acc)
    }

    /// Largest displacement magnitude over valid pixels.
    pub fn max_magnitude(&self) -> f64 {
        self.data
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(u, _)| u.norm())
            .fold(0.0, f64::max)
    }
}

/// Per-pixel scalar linking optical flow to undistortion flow for one target scanline.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub target_scanline: f64,
    pub direction: Direction,
    pub valid: Vec<bool>,
}

impl CorrelationMap {
    pub fn filled(width: usize, height: usize, value: f64, target_scanline: f64, direction: Direction) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
            target_scanline,
            direction,
            valid: vec![true; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Per-pixel depth in scene units.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn constant(width: usize, height: usize, z: f64) -> Self {
        Self {
            width,
            height,
            data: vec![z; width * height],
            valid: vec![z > 0.0; width * height],
        }
    }

    /// Builds a map from raw values; non-finite or nonpositive entries are invalid.
    pub fn from_values(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        let valid = data.iter().map(|z| z.is_finite() && *z > 0.0).collect();
        Ok(Self {
            width,
            height,
            data,
            valid,
        })
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then_some(self.data[i])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
