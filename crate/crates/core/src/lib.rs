//! Finger-worn 3D touch input pipeline: wire decoding, orientation fusion,
//! gesture detection, interaction techniques, trace simulation and accuracy
//! evaluation.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod filter;
pub mod geom;
pub mod gestures;
pub mod interaction;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod texture;
pub mod traj;
pub mod wire;

pub use error::{Error, Result};
pub use geom::{EulerAngles, PlaneBasis, UnitQuat, Vec3};
