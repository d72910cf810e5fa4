use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::obstacle::{collides, nearest_clearance};
use super::scenario::{assistance_hint, Scenario};
use crate::config::{EpisodeConfig, RewardConfig, RunConfig, WorldConfig};
use crate::encoder::{cosine_similarity, EncoderParams, FeatureVector};
use crate::error::{Error, Result};
use crate::geometry::{apply_action, euclidean_distance, Action, ActionBounds, Pose, Vec3, Waypoint};
use crate::labels::Assistance;
use crate::metrics::EpisodeResult;
use crate::neural::{log_prob_with_grad, policy_forward, value_forward, PolicyParams, ValueParams, ACTION_DIM};
use crate::rewards::{per_step_shaped_reward, verifiable_reward};
use crate::scalar::Scalar;

/// Everything about the world an episode needs besides the scenario.
#[derive(Debug, Clone)]
pub struct Env<T: Scalar> {
    pub encoder: EncoderParams<T>,
    pub world: WorldConfig<T>,
    pub bounds: ActionBounds<T>,
    pub episode: EpisodeConfig<T>,
    pub reward: RewardConfig<T>,
}

impl<T: Scalar> Env<T> {
    pub fn from_config(cfg: &RunConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            encoder: EncoderParams::new(cfg.encoder)?,
            world: cfg.world,
            bounds: cfg.bounds,
            episode: cfg.episode,
            reward: cfg.reward,
        })
    }

    pub fn clearance(&self, p: &Vec3<T>, scenario: &Scenario<T>) -> Option<Vec3<T>> {
        nearest_clearance(p, &scenario.obstacles)
    }

    /// Policy input at `pose`.
    pub fn observe(&self, pose: &Pose<T>, scenario: &Scenario<T>, hint: Option<Vec3<T>>) -> Result<FeatureVector<T>> {
        let c = self.clearance(&pose.position(), scenario);
        self.encoder.encode_state(pose, &scenario.goal, hint, c)
    }

    /// Guidance-free state features scored by the value model and the verifiable reward.
    pub fn state_features(&self, pose: &Pose<T>, scenario: &Scenario<T>) -> Result<FeatureVector<T>> {
        self.observe(pose, scenario, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
        })
    }
}

/// One transition `s_t → s_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StepRecord<T: Scalar> {
    /// 1-based step index.
    pub t: usize,
    /// Pose after the action.
    pub pose: Pose<T>,
    /// Policy input at `s_t`.
    pub observation: FeatureVector<T>,
    pub action: Action<T>,
    /// Unclamped sample in unit action space; `log_prob` is its density.
    pub raw_action: Vec<T>,
    pub log_prob: T,
    /// Value of the post-action state.
    pub value: T,
    pub reward_dense: T,
    pub reward_verifiable: T,
    pub collided: bool,
    pub hint: Option<Vec3<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpisodeHeader<T: Scalar> {
    pub scenario_id: String,
    pub seed: u64,
    pub assistance: Assistance,
    pub outcome: Outcome,
    pub encoder_seed: u64,
    pub encoder_dim: usize,
    pub steps: usize,
    pub start_value: T,
    pub initial_distance: T,
    pub final_distance: T,
    pub min_distance: T,
    pub path_length: T,
    pub oracle_length: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Episode<T: Scalar> {
    pub header: EpisodeHeader<T>,
    pub records: Vec<StepRecord<T>>,
}

impl<T: Scalar> Episode<T> {
    pub fn outcome(&self) -> Outcome {
        self.header.outcome
    }

    pub fn result(&self) -> EpisodeResult<T> {
        let h = &self.header;
        EpisodeResult {
            success: h.outcome == Outcome::Success,
            final_distance: h.final_distance,
            min_distance: h.min_distance,
            initial_distance: h.initial_distance,
            agent_path_length: h.path_length,
            oracle_path_length: h.oracle_length,
        }
    }

    /// Values `v_1 … v_{n+1}` of the visited states.
    pub fn values(&self) -> Vec<T> {
        std::iter::once(self.header.start_value)
            .chain(self.records.iter().map(|r| r.value))
            .collect()
    }

    /// Header line followed by one line per record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines.next().ok_or(Error::Empty("episode log"))??;
        let header = serde_json::from_str(&head)?;
        let records = lines
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { header, records })
    }
}

/// What a controller decided at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision<T: Scalar> {
    pub action: Action<T>,
    pub raw_action: Vec<T>,
    pub log_prob: T,
}

/// Chooses actions. Implementations must be deterministic given the RNG state.
pub trait Controller<T: Scalar> {
    fn act(
        &self,
        obs: &FeatureVector<T>,
        pose: &Pose<T>,
        scenario: &Scenario<T>,
        bounds: &ActionBounds<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision<T>>;
}

/// Gaussian policy; samples during training, uses the mean when `greedy`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPilot<'a, T: Scalar> {
    pub policy: &'a PolicyParams<T>,
    pub greedy: bool,
}

impl<T: Scalar> Controller<T> for GaussianPilot<'_, T> {
    fn act(
        &self,
        obs: &FeatureVector<T>,
        _pose: &Pose<T>,
        _scenario: &Scenario<T>,
        bounds: &ActionBounds<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision<T>> {
        let (mean, std) = policy_forward(self.policy, obs)?;
        let raw: Vec<T> = if self.greedy {
            mean.clone()
        } else {
            mean.iter()
                .zip(&std)
                .map(|(&m, &s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * T::lit(z)
                })
                .collect()
        };
        // same routine the optimizer uses, so the first ratio is exactly 1
        let log_prob = log_prob_with_grad(&mean, &self.policy.log_std, &raw).0;
        Ok(Decision {
            action: Action::from_unit(&raw, bounds),
            raw_action: raw,
            log_prob,
        })
    }
}

/// Flies straight at the next oracle waypoint at full speed.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePilot;

impl<T: Scalar> Controller<T> for OraclePilot {
    fn act(
        &self,
        _obs: &FeatureVector<T>,
        pose: &Pose<T>,
        scenario: &Scenario<T>,
        bounds: &ActionBounds<T>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Decision<T>> {
        let p = pose.position();
        let off = scenario.target_waypoint(&p) - p;
        let len = off.norm();
        let step = if len > bounds.max_step_len {
            off * (bounds.max_step_len / len)
        } else {
            off
        };
        let mut raw: Vec<T> = step.0.iter().map(|&c| c / bounds.max_step_len).collect();
        raw.resize(ACTION_DIM, T::zero());
        Ok(Decision {
            action: Action::translation(step),
            raw_action: raw,
            log_prob: T::zero(),
        })
    }
}

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoverPilot;

impl<T: Scalar> Controller<T> for HoverPilot {
    fn act(
        &self,
        _obs: &FeatureVector<T>,
        _pose: &Pose<T>,
        _scenario: &Scenario<T>,
        _bounds: &ActionBounds<T>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Decision<T>> {
        Ok(Decision {
            action: Action::translation(Vec3::zero()),
            raw_action: vec![T::zero(); ACTION_DIM],
            log_prob: T::zero(),
        })
    }
}

/// Rolls out one episode.
///
/// Each step observes `s_t`, asks the controller for an action, applies it,
/// then scores `s_{t+1}`: the dense reward from the value model and the
/// verifiable reward from the similarity between `s_{t+1}` and the
/// ground-truth waypoint that was current at `s_t`. Success is checked
/// before collision, so a terminal pose inside the success ball counts as
/// a success.
pub fn run_episode<T: Scalar>(
    controller: &dyn Controller<T>,
    value: &ValueParams<T>,
    scenario: &Scenario<T>,
    assistance: Assistance,
    env: &Env<T>,
    rng_seed: u64,
) -> Result<Episode<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let goal = scenario.goal_position();
    let radius = env.episode.success_radius;
    let rc = &env.reward;
    let mut pose = scenario.start;
    let start_value = value_forward(value, &env.state_features(&pose, scenario)?)?;
    let initial_distance = scenario.initial_distance();
    let mut v_prev = start_value;
    let mut min_distance = initial_distance;
    let mut final_distance = initial_distance;
    let mut path_length = T::zero();
    let mut records = Vec::new();
    let mut outcome = Outcome::Timeout;
    for t in 1..=env.episode.max_steps {
        let pos = pose.position();
        let hint = assistance_hint(assistance, &pose, scenario, env.world.helper_threshold);
        let target = scenario.target_waypoint(&pos);
        let obs = env.observe(&pose, scenario, hint)?;
        let d = controller.act(&obs, &pose, scenario, &env.bounds, &mut rng)?;
        let next = apply_action(&pose, &d.action, &env.bounds)?;
        let next_pos = next.position();
        let feat = env.state_features(&next, scenario)?;
        let v_next = value_forward(value, &feat)?;
        let label = env.encoder.encode_goal(&Waypoint::new(target), &scenario.goal)?;
        let sim = cosine_similarity(&feat, &label)?;
        let collided = collides(&next, &scenario.obstacles, env.world.drone_radius);
        path_length = path_length + euclidean_distance(&pos, &next_pos);
        final_distance = euclidean_distance(&next_pos, &goal);
        min_distance = min_distance.min(final_distance);
        records.push(StepRecord {
            t,
            pose: next,
            observation: obs,
            action: d.action,
            raw_action: d.raw_action,
            log_prob: d.log_prob,
            value: v_next,
            reward_dense: per_step_shaped_reward(v_prev, v_next, rc.gamma, rc.shaping_mode, t),
            reward_verifiable: verifiable_reward(sim, rc.r_level, rc.r_max),
            collided,
            hint,
        });
        pose = next;
        v_prev = v_next;
        if final_distance <= radius {
            outcome = Outcome::Success;
            break;
        }
        if collided {
            outcome = Outcome::Collision;
            break;
        }
    }
    Ok(Episode {
        header: EpisodeHeader {
            scenario_id: scenario.id.clone(),
            seed: rng_seed,
            assistance,
            outcome,
            encoder_seed: env.encoder.seed(),
            encoder_dim: env.encoder.dim(),
            steps: records.len(),
            start_value,
            initial_distance,
            final_distance,
            min_distance,
            path_length,
            oracle_length: scenario.oracle_length(),
        },
        records,
    })
}
