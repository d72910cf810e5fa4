//! Frozen feature encoder for states and goal waypoints.
//!
//! A seeded random projection followed by `tanh` maps a normalized
//! geometric description of the situation into a fixed-dimension feature
//! vector. Weights are drawn once from `encoder_seed` and never trained.
//!
//! Raw input layout (`RAW_DIM` entries):
//!
//! | range   | content                                              |
//! |---------|------------------------------------------------------|
//! | 0..3    | goal offset / `world_scale`                          |
//! | 3..6    | goal offset / (‖offset‖ + `near_scale`)              |
//! | 6..9    | position / `world_scale`                             |
//! | 9..12   | hint offset / (‖offset‖ + `near_scale`), zero if none|
//! | 12      | hint present flag                                    |
//! | 13..16  | obstacle proximity: direction · s / (‖c‖ + s)        |
//! | 16..19  | sin of Euler angles, scaled                          |
//! | 19..23  | instruction token embedding                          |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3, Waypoint};
use crate::scalar::{dot, Scalar};

pub const TOKEN_DIM: usize = 4;
pub const RAW_DIM: usize = 19 + TOKEN_DIM;

const CLEARANCE_SCALE: f64 = 10.0;
const ANGLE_SCALE: f64 = 0.1;
const TOKEN_SCALE: f64 = 0.5;
const BIAS_STD: f64 = 0.5;

/// Fixed-length embedding vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "", transparent)]
pub struct FeatureVector<T: Scalar>(pub Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Goal description standing in for a natural-language instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GoalSpec<T: Scalar> {
    pub goal_position: Vec3<T>,
    pub goal_token_seed: u64,
    /// Token embedding derived from `goal_token_seed`, followed by the goal
    /// position in kilometers.
    pub description_features: FeatureVector<T>,
}

impl<T: Scalar> GoalSpec<T> {
    pub fn new(goal_position: Vec3<T>, goal_token_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(goal_token_seed ^ 0x7a3d_9e1f_55c2_0b47);
        let mut d: Vec<T> = (0..TOKEN_DIM)
            .map(|_| T::lit(rng.random_range(-1.0..1.0)))
            .collect();
        let km = T::lit(1e-3);
        d.extend(goal_position.0.iter().map(|&c| c * km));
        Self {
            goal_position,
            goal_token_seed,
            description_features: FeatureVector(d),
        }
    }

    pub fn token(&self) -> &[T] {
        &self.description_features.0[..TOKEN_DIM]
    }
}

/// Frozen projection weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EncoderParams<T: Scalar> {
    pub config: EncoderConfig<T>,
    /// Row-major `dim × RAW_DIM`.
    weights: Vec<T>,
    bias: Vec<T>,
}

fn saturating<T: Scalar>(v: Vec3<T>, scale: T) -> Vec3<T> {
    v * (T::one() / (v.norm() + scale))
}

impl<T: Scalar> EncoderParams<T> {
    pub fn new(config: EncoderConfig<T>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.encoder_seed);
        let d = config.encoder_dim;
        let gain = config.encoder_gain;
        let weights = (0..d * RAW_DIM)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)) * gain)
            .collect();
        let bias = (0..d)
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * BIAS_STD))
            .collect();
        Ok(Self {
            config,
            weights,
            bias,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.encoder_dim
    }

    pub fn seed(&self) -> u64 {
        self.config.encoder_seed
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    fn check_goal(&self, goal: &GoalSpec<T>) -> Result<()> {
        let want = TOKEN_DIM + 3;
        if goal.description_features.dim() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: goal.description_features.dim(),
            });
        }
        Ok(())
    }

    /// Normalized geometric description of a state.
    pub fn raw_state(
        &self,
        pose: &Pose<T>,
        goal: &GoalSpec<T>,
        hint: Option<Vec3<T>>,
        clearance: Option<Vec3<T>>,
    ) -> Result<[T; RAW_DIM]> {
        self.check_goal(goal)?;
        let pos = pose.position();
        let mut raw = [T::zero(); RAW_DIM];
        self.fill_spatial(&mut raw, pos, goal.goal_position);
        if let Some(h) = hint {
            let v = saturating(h - pos, self.config.near_scale);
            raw[9..12].copy_from_slice(&v.0);
            raw[12] = T::one();
        }
        if let Some(c) = clearance {
            let s = T::lit(CLEARANCE_SCALE);
            let v = c.normalized() * (s / (c.norm() + s));
            raw[13..16].copy_from_slice(&v.0);
        }
        let k = T::lit(ANGLE_SCALE);
        for (i, a) in pose.angles().into_iter().enumerate() {
            raw[16 + i] = a.sin() * k;
        }
        self.fill_token(&mut raw, goal);
        Ok(raw)
    }

    /// Label-side description of a target waypoint.
    pub fn raw_goal(&self, w: &Waypoint<T>, goal: &GoalSpec<T>) -> Result<[T; RAW_DIM]> {
        self.check_goal(goal)?;
        let mut raw = [T::zero(); RAW_DIM];
        self.fill_spatial(&mut raw, w.position, goal.goal_position);
        self.fill_token(&mut raw, goal);
        Ok(raw)
    }

    fn fill_spatial(&self, raw: &mut [T; RAW_DIM], pos: Vec3<T>, goal: Vec3<T>) {
        let inv = T::one() / self.config.world_scale;
        let off = goal - pos;
        raw[0..3].copy_from_slice(&(off * inv).0);
        raw[3..6].copy_from_slice(&saturating(off, self.config.near_scale).0);
        raw[6..9].copy_from_slice(&(pos * inv).0);
    }

    fn fill_token(&self, raw: &mut [T; RAW_DIM], goal: &GoalSpec<T>) {
        let k = T::lit(TOKEN_SCALE);
        for (dst, &t) in raw[19..].iter_mut().zip(goal.token()) {
            *dst = t * k;
        }
    }

    /// `tanh(W · raw + b)`.
    pub fn project(&self, raw: &[T]) -> Result<FeatureVector<T>> {
        if raw.len() != RAW_DIM {
            return Err(Error::DimensionMismatch {
                expected: RAW_DIM,
                got: raw.len(),
            });
        }
        Ok(FeatureVector(
            self.weights
                .chunks_exact(RAW_DIM)
                .zip(&self.bias)
                .map(|(row, &b)| (dot(row, raw) + b).tanh())
                .collect(),
        ))
    }

    pub fn encode_state(
        &self,
        pose: &Pose<T>,
        goal: &GoalSpec<T>,
        hint: Option<Vec3<T>>,
        clearance: Option<Vec3<T>>,
    ) -> Result<FeatureVector<T>> {
        self.project(&self.raw_state(pose, goal, hint, clearance)?)
    }

    pub fn encode_goal(&self, w: &Waypoint<T>, goal: &GoalSpec<T>) -> Result<FeatureVector<T>> {
        self.project(&self.raw_goal(w, goal)?)
    }

    /// Upper bound on ‖Δfeatures‖ / ‖Δposition‖ for obstacle-free inputs
    /// with orientation, hint and goal held fixed.
    pub fn position_lipschitz_bound(&self) -> T {
        let frob = self.weights.iter().fold(T::zero(), |a, &w| a + w * w).sqrt();
        let far = T::one() / self.config.world_scale;
        let near = T::one() / self.config.near_scale;
        // goal-offset and absolute channels are linear; saturating channels
        // have Jacobian norm at most 1/near_scale
        let raw = (far * far * T::lit(2.0) + near * near * T::lit(2.0)).sqrt();
        frob * raw
    }
}

/// `⟨u, v⟩ / (‖u‖ ‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(u: &FeatureVector<T>, v: &FeatureVector<T>) -> Result<T> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let nu = dot(&u.0, &u.0).sqrt();
    let nv = dot(&v.0, &v.0).sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroVector);
    }
    let s = dot(&u.0, &v.0) / (nu * nv);
    Ok(s.max(-T::one()).min(T::one()))
}
