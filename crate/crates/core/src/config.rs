//! Run configuration and its flat `key=value` text format.
//!
//! Every key is the name of a field below. Blank lines and lines starting
//! with `#` are ignored; unknown keys are rejected. `r_level=inf` selects
//! the uncapped verifiable reward.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::ActionBounds;
use crate::scalar::Scalar;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpisodeConfig<T: Scalar> {
    pub max_steps: usize,
    pub success_radius: T,
    pub seed: u64,
}

impl<T: Scalar> Default for EpisodeConfig<T> {
    fn default() -> Self {
        Self {
            max_steps: 200,
            success_radius: T::lit(20.0),
            seed: 0,
        }
    }
}

impl<T: Scalar> EpisodeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(cfg_err("max_steps must be >= 1"));
        }
        if !(self.success_radius > T::zero()) {
            return Err(cfg_err("success_radius must be positive"));
        }
        Ok(())
    }
}

/// Cap on the verifiable reward: a finite level or no threshold at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RLevel<T: Scalar> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> RLevel<T> {
    /// Effective cap: the level itself, or `r_max` when uncapped.
    pub fn cap(&self, r_max: T) -> T {
        match *self {
            RLevel::Finite(v) => v,
            RLevel::Infinite => r_max,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, RLevel::Infinite)
    }
}

impl<T: Scalar> fmt::Display for RLevel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RLevel::Finite(v) => write!(f, "{v:?}"),
            RLevel::Infinite => f.write_str("inf"),
        }
    }
}

impl<T: Scalar> FromStr for RLevel<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s, "inf" | "INF" | "Inf" | "infinity" | "∞") {
            return Ok(RLevel::Infinite);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| cfg_err(format!("bad r_level `{s}`")))?;
        if v.is_infinite() && v > 0.0 {
            return Ok(RLevel::Infinite);
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(cfg_err(format!("r_level must be positive or inf, got `{s}`")));
        }
        Ok(RLevel::Finite(T::lit(v)))
    }
}

impl<T: Scalar> Serialize for RLevel<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RLevel::Finite(v) => v.serialize(s),
            RLevel::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for RLevel<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(RLevel::Finite(T::lit(v))),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapingMode {
    /// `γ^t (v_t − v_{t+1})`, evaluated as written.
    PaperLiteral,
    /// `γ v_{t+1} − v_t`: rewards progress toward higher value.
    Potential,
}

impl fmt::Display for ShapingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapingMode::PaperLiteral => "paper-literal",
            ShapingMode::Potential => "potential",
        })
    }
}

impl FromStr for ShapingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper-literal" | "paper_literal" | "literal" => Ok(ShapingMode::PaperLiteral),
            "potential" => Ok(ShapingMode::Potential),
            other => Err(cfg_err(format!("unknown shaping_mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RewardConfig<T: Scalar> {
    pub gamma: T,
    pub r_level: RLevel<T>,
    pub r_max: T,
    pub shaping_mode: ShapingMode,
    /// Hinge margin of the value ranking loss.
    pub margin: T,
    pub w_dense: T,
    pub w_verif: T,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.99),
            r_level: RLevel::Finite(T::lit(5.0)),
            r_max: T::lit(1e6),
            shaping_mode: ShapingMode::Potential,
            margin: T::lit(0.01),
            w_dense: T::one(),
            w_verif: T::one(),
        }
    }
}

impl<T: Scalar> RewardConfig<T> {
    pub fn cap(&self) -> T {
        self.r_level.cap(self.r_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return Err(cfg_err("gamma must lie in (0, 1]"));
        }
        if !(self.r_max.is_finite() && self.r_max > T::zero()) {
            return Err(cfg_err("r_max must be finite and positive"));
        }
        if let RLevel::Finite(v) = self.r_level {
            if !(v > T::zero() && v.is_finite()) {
                return Err(cfg_err("r_level must be positive"));
            }
            if v > self.r_max {
                return Err(cfg_err("r_max must be >= r_level"));
            }
        }
        if !(self.margin >= T::zero()) {
            return Err(cfg_err("margin must be non-negative"));
        }
        if !(self.w_dense.is_finite() && self.w_verif.is_finite()) {
            return Err(cfg_err("reward weights must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OptimizerConfig<T: Scalar> {
    /// Clip range of the probability ratio.
    pub epsilon: T,
    /// KL coefficient toward the reference policy.
    pub beta: T,
    pub learning_rate: T,
    /// Episodes per gradient step.
    pub batch_size: usize,
}

impl<T: Scalar> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(0.2),
            beta: T::lit(0.1),
            learning_rate: T::lit(1e-4),
            batch_size: 1,
        }
    }
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(cfg_err("epsilon must lie in (0, 1)"));
        }
        if !(self.beta >= T::zero()) {
            return Err(cfg_err("beta must be non-negative"));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(cfg_err("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(cfg_err("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Synthetic world and scenario generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct WorldConfig<T: Scalar> {
    /// Horizontal extent: x and y lie in `[-half_extent, half_extent]`.
    pub half_extent: T,
    /// Flight ceiling: z lies in `[0, ceiling]`.
    pub ceiling: T,
    pub drone_radius: T,
    pub grid_resolution: T,
    pub helper_threshold: T,
    pub obstacle_count: usize,
    pub min_start_goal: T,
    pub max_start_goal: T,
    /// Easy/hard boundary on oracle path length.
    pub hard_threshold: T,
    pub max_attempts: usize,
}

impl<T: Scalar> Default for WorldConfig<T> {
    fn default() -> Self {
        Self {
            half_extent: T::lit(250.0),
            ceiling: T::lit(120.0),
            drone_radius: T::one(),
            grid_resolution: T::lit(5.0),
            helper_threshold: T::lit(30.0),
            obstacle_count: 4,
            min_start_goal: T::lit(50.0),
            max_start_goal: T::lit(400.0),
            hard_threshold: T::lit(250.0),
            max_attempts: 200,
        }
    }
}

impl<T: Scalar> WorldConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_extent > T::zero() && self.ceiling > T::zero()) {
            return Err(cfg_err("world extents must be positive"));
        }
        if !(self.drone_radius >= T::zero()) {
            return Err(cfg_err("drone_radius must be non-negative"));
        }
        if !(self.grid_resolution > T::zero()) {
            return Err(cfg_err("grid_resolution must be positive"));
        }
        if !(self.min_start_goal > T::zero() && self.min_start_goal <= self.max_start_goal) {
            return Err(cfg_err("need 0 < min_start_goal <= max_start_goal"));
        }
        if self.max_attempts == 0 {
            return Err(cfg_err("max_attempts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EncoderConfig<T: Scalar> {
    pub encoder_seed: u64,
    pub encoder_dim: usize,
    /// Length scale for positions and far-field offsets, meters.
    pub world_scale: T,
    /// Length scale of the saturating near-field offset channel, meters.
    pub near_scale: T,
    /// Gain applied to the random projection.
    pub encoder_gain: T,
}

impl<T: Scalar> Default for EncoderConfig<T> {
    fn default() -> Self {
        Self {
            encoder_seed: 42,
            encoder_dim: 64,
            world_scale: T::lit(400.0),
            near_scale: T::lit(60.0),
            encoder_gain: T::lit(1.0),
        }
    }
}

impl<T: Scalar> EncoderConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.encoder_dim == 0 {
            return Err(cfg_err("encoder_dim must be >= 1"));
        }
        if !(self.world_scale > T::zero() && self.near_scale > T::zero()) {
            return Err(cfg_err("encoder scales must be positive"));
        }
        Ok(())
    }
}

/// Which assistance level(s) training episodes use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainAssistance {
    L1,
    L2,
    L3,
    /// Cycle L1, L2, L3 across the episodes of each iteration.
    Mixed,
}

impl fmt::Display for TrainAssistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainAssistance::L1 => "l1",
            TrainAssistance::L2 => "l2",
            TrainAssistance::L3 => "l3",
            TrainAssistance::Mixed => "mixed",
        })
    }
}

impl FromStr for TrainAssistance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            "l3" => Ok(Self::L3),
            "mixed" => Ok(Self::Mixed),
            other => Err(cfg_err(format!("unknown train_assistance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainConfig<T: Scalar> {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    pub inner_epochs: usize,
    /// Subtract the batch-mean reward before the surrogate.
    pub baseline: bool,
    pub hidden_sizes: Vec<usize>,
    pub log_std_init: T,
    pub expert_episodes: usize,
    pub value_epochs: usize,
    pub value_learning_rate: T,
    pub checkpoint_every: usize,
    pub train_assistance: TrainAssistance,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_iteration: 16,
            inner_epochs: 4,
            baseline: false,
            hidden_sizes: vec![64, 64],
            log_std_init: T::lit(-0.7),
            expert_episodes: 200,
            value_epochs: 30,
            value_learning_rate: T::lit(1e-3),
            checkpoint_every: 50,
            train_assistance: TrainAssistance::L1,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_iteration == 0 {
            return Err(cfg_err("episodes_per_iteration must be >= 1"));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(cfg_err("hidden layer sizes must be >= 1"));
        }
        if !(self.log_std_init >= T::lit(-5.0) && self.log_std_init <= T::lit(2.0)) {
            return Err(cfg_err("log_std_init must lie in [-5, 2]"));
        }
        if !(self.value_learning_rate > T::zero()) {
            return Err(cfg_err("value_learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Complete configuration of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RunConfig<T: Scalar> {
    pub episode: EpisodeConfig<T>,
    pub bounds: ActionBounds<T>,
    pub world: WorldConfig<T>,
    pub encoder: EncoderConfig<T>,
    pub reward: RewardConfig<T>,
    pub optimizer: OptimizerConfig<T>,
    pub train: TrainConfig<T>,
}

fn parse_num<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| cfg_err(format!("bad value `{v}` for `{key}`")))
}

fn parse_scalar<T: Scalar>(key: &str, v: &str) -> Result<T> {
    let x: f64 = parse_num(key, v)?;
    Ok(T::lit(x))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(cfg_err(format!("bad boolean `{v}` for `{key}`"))),
    }
}

impl<T: Scalar> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        if !(self.bounds.max_step_len > T::zero() && self.bounds.max_turn > T::zero()) {
            return Err(cfg_err("action bounds must be positive"));
        }
        self.world.validate()?;
        self.encoder.validate()?;
        self.reward.validate()?;
        self.optimizer.validate()?;
        self.train.validate()
    }

    /// Sets one field by its key name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "max_steps" => self.episode.max_steps = parse_num(key, v)?,
            "success_radius" => self.episode.success_radius = parse_scalar(key, v)?,
            "seed" => self.episode.seed = parse_num(key, v)?,
            "max_step_len" => self.bounds.max_step_len = parse_scalar(key, v)?,
            "max_turn" => self.bounds.max_turn = parse_scalar(key, v)?,
            "half_extent" => self.world.half_extent = parse_scalar(key, v)?,
            "ceiling" => self.world.ceiling = parse_scalar(key, v)?,
            "drone_radius" => self.world.drone_radius = parse_scalar(key, v)?,
            "grid_resolution" => self.world.grid_resolution = parse_scalar(key, v)?,
            "helper_threshold" => self.world.helper_threshold = parse_scalar(key, v)?,
            "obstacle_count" => self.world.obstacle_count = parse_num(key, v)?,
            "min_start_goal" => self.world.min_start_goal = parse_scalar(key, v)?,
            "max_start_goal" => self.world.max_start_goal = parse_scalar(key, v)?,
            "hard_threshold" => self.world.hard_threshold = parse_scalar(key, v)?,
            "max_attempts" => self.world.max_attempts = parse_num(key, v)?,
            "encoder_seed" => self.encoder.encoder_seed = parse_num(key, v)?,
            "encoder_dim" => self.encoder.encoder_dim = parse_num(key, v)?,
            "world_scale" => self.encoder.world_scale = parse_scalar(key, v)?,
            "near_scale" => self.encoder.near_scale = parse_scalar(key, v)?,
            "encoder_gain" => self.encoder.encoder_gain = parse_scalar(key, v)?,
            "gamma" => self.reward.gamma = parse_scalar(key, v)?,
            "r_level" => self.reward.r_level = v.parse()?,
            "r_max" => self.reward.r_max = parse_scalar(key, v)?,
            "shaping_mode" => self.reward.shaping_mode = v.parse()?,
            "margin" => self.reward.margin = parse_scalar(key, v)?,
            "w_dense" => self.reward.w_dense = parse_scalar(key, v)?,
            "w_verif" => self.reward.w_verif = parse_scalar(key, v)?,
            "epsilon" => self.optimizer.epsilon = parse_scalar(key, v)?,
            "beta" => self.optimizer.beta = parse_scalar(key, v)?,
            "learning_rate" => self.optimizer.learning_rate = parse_scalar(key, v)?,
            "batch_size" => self.optimizer.batch_size = parse_num(key, v)?,
            "iterations" => self.train.iterations = parse_num(key, v)?,
            "episodes_per_iteration" => self.train.episodes_per_iteration = parse_num(key, v)?,
            "inner_epochs" => self.train.inner_epochs = parse_num(key, v)?,
            "baseline" => self.train.baseline = parse_bool(key, v)?,
            "hidden_sizes" => {
                self.train.hidden_sizes = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_num(key, s))
                    .collect::<Result<_>>()?
            }
            "log_std_init" => self.train.log_std_init = parse_scalar(key, v)?,
            "expert_episodes" => self.train.expert_episodes = parse_num(key, v)?,
            "value_epochs" => self.train.value_epochs = parse_num(key, v)?,
            "value_learning_rate" => self.train.value_learning_rate = parse_scalar(key, v)?,
            "checkpoint_every" => self.train.checkpoint_every = parse_num(key, v)?,
            "train_assistance" => self.train.train_assistance = v.parse()?,
            other => return Err(cfg_err(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses the flat `key=value` format on top of the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(k, v)
                .map_err(|e| cfg_err(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let s = |x: T| format!("{x:?}");
        let hidden = self
            .train
            .hidden_sizes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("max_steps", self.episode.max_steps.to_string()),
            ("success_radius", s(self.episode.success_radius)),
            ("seed", self.episode.seed.to_string()),
            ("max_step_len", s(self.bounds.max_step_len)),
            ("max_turn", s(self.bounds.max_turn)),
            ("half_extent", s(self.world.half_extent)),
            ("ceiling", s(self.world.ceiling)),
            ("drone_radius", s(self.world.drone_radius)),
            ("grid_resolution", s(self.world.grid_resolution)),
            ("helper_threshold", s(self.world.helper_threshold)),
            ("obstacle_count", self.world.obstacle_count.to_string()),
            ("min_start_goal", s(self.world.min_start_goal)),
            ("max_start_goal", s(self.world.max_start_goal)),
            ("hard_threshold", s(self.world.hard_threshold)),
            ("max_attempts", self.world.max_attempts.to_string()),
            ("encoder_seed", self.encoder.encoder_seed.to_string()),
            ("encoder_dim", self.encoder.encoder_dim.to_string()),
            ("world_scale", s(self.encoder.world_scale)),
            ("near_scale", s(self.encoder.near_scale)),
            ("encoder_gain", s(self.encoder.encoder_gain)),
            ("gamma", s(self.reward.gamma)),
            ("r_level", self.reward.r_level.to_string()),
            ("r_max", s(self.reward.r_max)),
            ("shaping_mode", self.reward.shaping_mode.to_string()),
            ("margin", s(self.reward.margin)),
            ("w_dense", s(self.reward.w_dense)),
            ("w_verif", s(self.reward.w_verif)),
            ("epsilon", s(self.optimizer.epsilon)),
            ("beta", s(self.optimizer.beta)),
            ("learning_rate", s(self.optimizer.learning_rate)),
            ("batch_size", self.optimizer.batch_size.to_string()),
            ("iterations", self.train.iterations.to_string()),
            ("episodes_per_iteration", self.train.episodes_per_iteration.to_string()),
            ("inner_epochs", self.train.inner_epochs.to_string()),
            ("baseline", self.train.baseline.to_string()),
            ("hidden_sizes", hidden),
            ("log_std_init", s(self.train.log_std_init)),
            ("expert_episodes", self.train.expert_episodes.to_string()),
            ("value_epochs", self.train.value_epochs.to_string()),
            ("value_learning_rate", s(self.train.value_learning_rate)),
            ("checkpoint_every", self.train.checkpoint_every.to_string()),
            ("train_assistance", self.train.train_assistance.to_string()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
