//! Joint registration of per-view monocular depth maps and camera poses from relative depth
//! pseudo-labels and sparse correspondences.
//!
//! The objective combines a scale-invariant depth loss with per-pixel learned confidence and an
//! angular reprojection loss measured from each anchor camera center. [`optimizer::solve`]
//! minimizes it over poses, per-view log scales, smooth log-depth residual grids and confidence
//! logits. [`sim`] generates analytic ground-truth scenes and [`metrics`] scores solutions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod maps;
pub mod metrics;
pub mod optimizer;
pub mod problem;
pub mod robust;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Pixel, Point3, PoseSE3, TangentSE3};
pub use losses::{HyperParams, LossBreakdown, Objective};
pub use maps::{ConfidenceMap, CorrespondenceSet, DepthMap};
pub use optimizer::{solve, OptimConfig, Solution};
pub use problem::{Problem, SceneState, View};
