//! Rolling-shutter geometry toolkit.
//!
//! Simulates rolling-shutter (RS) capture of textured planar scenes from known
//! camera motion and inverts it: two consecutive RS frames plus their optical
//! flows are turned into global-shutter (GS) frames at any scanline time.
//!
//! - [`geometry`]: motion fields, scanline pose weights, undistortion and
//!   correlation factors, propagation between target scanlines.
//! - [`scene`]: ground-truth renderer, RS composition, GT flow and occlusion.
//! - [`warp`]: softmax forward splatting and bilinear backward warping.
//! - [`estimate`]: motion least squares, consensus, acceleration fit, LK flow.
//! - [`metrics`] and [`io`]: PSNR/SSIM and `.flo`/PFM/PNG files.
//! - [`pipeline`]: the end-to-end inversion used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod selfcheck;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{CameraModel, CorrelationMap, DepthMap, Direction, FlowField, FlowKind, MotionState, RsTiming};
pub use image::Image;
