//! Scene description file (TOML).
//!
//! ```toml
//! texture = "procedural"      # "procedural", "checker" or a path to a PNG
//! seed = 7                    # optional, procedural texture seed
//! plane_depth = 6.0           # fronto-parallel plane at Z = 6 ...
//! # [depth_ramp]              # ... or a slanted plane Z = z0 + dz_dx X + dz_dy Y
//! # z0 = 6.0
//! # dz_dx = 0.2
//! # dz_dy = 0.0
//! focal = 300.0
//! principal = [160.0, 128.0]  # optional, defaults to (width/2, height/2)
//! width = 320
//! height = 256
//! gamma = 1.0
//! v = [0.5, 0.2, 0.0]
//! omega = [0.0, 0.0, 0.0]
//! k = 0.0                     # optional
//! frames = 2                  # optional
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::Deserialize;

use super::{Plane, Scene, Texture};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, MotionState, RsTiming};

/// Accepted range of the acceleration factor.
pub const K_RANGE: (f64, f64) = (-1.9, 10.0);

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DepthRamp {
    pub z0: f64,
    #[serde(default)]
    pub dz_dx: f64,
    #[serde(default)]
    pub dz_dy: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_texture")]
    pub texture: String,
    #[serde(default)]
    pub seed: u64,
    pub plane_depth: Option<f64>,
    pub depth_ramp: Option<DepthRamp>,
    pub focal: f64,
    pub principal: Option<[f64; 2]>,
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
    pub v: [f64; 3],
    pub omega: [f64; 3],
    #[serde(default)]
    pub k: f64,
    #[serde(default = "default_frames")]
    pub frames: u32,
}

fn default_texture() -> String {
    "procedural".into()
}

fn default_frames() -> u32 {
    2
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Builds the scene; relative texture paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Scene> {
        let plane = match (self.plane_depth, &self.depth_ramp) {
            (Some(z), None) => Plane {
                z0: z,
                dz_dx: 0.0,
                dz_dy: 0.0,
            },
            (None, Some(r)) => Plane {
                z0: r.z0,
                dz_dx: r.dz_dx,
                dz_dy: r.dz_dy,
            },
            _ => return Err(Error::Config("exactly one of plane_depth or depth_ramp is required".into())),
        };
        let principal = self
            .principal
            .map(|[x, y]| Vector2::new(x, y))
            .unwrap_or_else(|| Vector2::new((self.width / 2) as f64, (self.height / 2) as f64));
        let camera = CameraModel::new(self.focal, principal, self.width, self.height)?;
        let timing = RsTiming::new(self.gamma)?;
        if !(K_RANGE.0..=K_RANGE.1).contains(&self.k) {
            return Err(Error::Config(format!("k = {} outside [{}, {}]", self.k, K_RANGE.0, K_RANGE.1)));
        }
        let motion = MotionState::new(Vector3::from(self.v), Vector3::from(self.omega), self.k)?;
        let texture = match self.texture.as_str() {
            "procedural" | "noise" => Texture::procedural(self.seed),
            "checker" => Texture::checker(16.0),
            path => {
                let mut p = PathBuf::from(path);
                if p.is_relative() {
                    if let Some(base) = base_dir {
                        p = base.join(p);
                    }
                }
                Texture::Raster(crate::io::read_png(&p)?)
            }
        };
        Scene::new(texture, plane, camera, timing, motion, self.frames)
    }
}
