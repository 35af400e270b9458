//! Analytic estimators: camera motion from flow and depth, the acceleration
//! parameter from a reference frame, and a pyramidal local flow estimator.

mod lk;
mod motion;
mod phi;

pub use lk::{estimate_flow_lk, LkParams};
pub use motion::{estimate_motion_ls, estimate_motion_robust, MotionFit, RobustFit, RobustParams};
pub use phi::{estimate_phi, estimate_phi_single, PhiFit, PhiSearch};
