//! Joint forward-backward stereo visual odometry.
//!
//! Frame-to-frame motion is estimated twice per stereo pair: once with the
//! frames in temporal order and once with the roles of the previous and
//! current frames swapped. The inverted backward estimate is fused with the
//! forward one (geodesic midpoint on SO(3), mean translation), and the two
//! single-direction trajectories double as a ground-truth-free reliability
//! check.
//!
//! Modules:
//! - [`geometry`]: SO(3)/SE(3) helpers and the rectified stereo model
//! - [`features`]: blob/corner detection and circular quad matching
//! - [`estimator`]: RANSAC + Gauss-Newton motion estimation and fusion
//! - [`metrics`]: forward-backward consistency and KITTI-style evaluation
//! - [`synth`]: synthetic scenes with exact ground truth
//! - [`io`]: KITTI calibration, poses and images, plus CSV reports
//! - [`pipeline`]: the sequential frame loop used by the CLI

pub mod estimator;
pub mod features;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use estimator::{EstimatorConfig, JointEstimate, MotionEstimate};
pub use features::{Feature, FeatureClass, Image, QuadMatch};
pub use geometry::{Landmark, Pose, Rotation, StereoRig};
pub use metrics::Trajectory;
