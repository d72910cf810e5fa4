//! Long-horizon aerial waypoint navigation with value-shaped dense rewards,
//! thresholded similarity rewards and KL-anchored clipped policy updates.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the harness uses.

pub mod config;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod labels;
pub mod metrics;
pub mod neural;
pub mod rewards;
pub mod rlopt;
pub mod scalar;
pub mod simworld;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by the concrete aliases.
pub type Real = f64;

pub type Pose = geometry::Pose<Real>;
pub type Action = geometry::Action<Real>;
pub type Vec3 = geometry::Vec3<Real>;
pub type Trajectory = geometry::Trajectory<Real>;
pub type RunConfig = config::RunConfig<Real>;
pub type FeatureVector = encoder::FeatureVector<Real>;
pub type EncoderParams = encoder::EncoderParams<Real>;
pub type PolicyParams = neural::PolicyParams<Real>;
pub type ValueParams = neural::ValueParams<Real>;
pub type Checkpoint = neural::Checkpoint<Real>;
pub type Scenario = simworld::Scenario<Real>;
pub type Episode = simworld::Episode<Real>;
pub type Env = simworld::Env<Real>;
pub type EpisodeResult = metrics::EpisodeResult<Real>;
