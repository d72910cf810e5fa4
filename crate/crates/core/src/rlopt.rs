//! Clipped-ratio policy fine-tuning with a KL anchor to a frozen reference
//! policy, driven by the dense value reward plus the verifiable reward.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{OptimizerConfig, RewardConfig, RunConfig, TrainAssistance};
use crate::encoder::FeatureVector;
use crate::error::{Error, Result};
use crate::geometry::{apply_action, euclidean_distance};
use crate::labels::{Assistance, Difficulty};
use crate::neural::{
    kl_with_grad, log_prob_with_grad, opt_step, Checkpoint, OptState, Parameters, PolicyParams, ValueParams,
};
use crate::rewards::{fit_value_model, FitReport};
use crate::scalar::Scalar;
use crate::simworld::{
    generate_scenario, run_episode, Controller, Env, Episode, GaussianPilot, OraclePilot, Outcome, Scenario,
};

const POLICY_SALT: u64 = 0x51f0_c2aa_3e97_1d04;
const VALUE_SALT: u64 = 0x0c6b_e4d1_92a7_5f38;
const EXPERT_SALT: u64 = 0xa4e2_7719_bd03_c6e5;
const ROLLOUT_SALT: u64 = 0x3d9a_0f6e_58c1_b27b;
/// Iterations in the rolling success-rate window of the training log.
const SR_WINDOW: usize = 10;

/// `w_dense · dense + w_verif · verifiable`.
pub fn total_step_reward<T: Scalar>(dense: T, verifiable: T, w_dense: T, w_verif: T) -> T {
    w_dense * dense + w_verif * verifiable
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RolloutStep<T: Scalar> {
    pub observation: FeatureVector<T>,
    pub raw_action: Vec<T>,
    /// Log-density under the sampling policy.
    pub log_prob_old: T,
    /// Combined reward fed to the surrogate.
    pub reward: T,
    pub reward_dense: T,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RolloutBatch<T: Scalar> {
    pub steps: Vec<RolloutStep<T>>,
    /// Step ranges of each episode.
    pub episodes: Vec<Range<usize>>,
}

impl<T: Scalar> RolloutBatch<T> {
    pub fn from_episodes(episodes: &[Episode<T>], reward: &RewardConfig<T>) -> Self {
        let mut batch = Self::default();
        for ep in episodes {
            let start = batch.steps.len();
            batch.steps.extend(ep.records.iter().map(|r| RolloutStep {
                observation: r.observation.clone(),
                raw_action: r.raw_action.clone(),
                log_prob_old: r.log_prob,
                reward: total_step_reward(r.reward_dense, r.reward_verifiable, reward.w_dense, reward.w_verif),
                reward_dense: r.reward_dense,
                t: r.t,
            }));
            batch.episodes.push(start..batch.steps.len());
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mean_reward(&self) -> T {
        if self.steps.is_empty() {
            return T::zero();
        }
        let sum = self.steps.iter().fold(T::zero(), |a, s| a + s.reward);
        sum / T::from_usize_lossy(self.steps.len())
    }

    /// Subtracts the batch-mean reward from every step.
    pub fn subtract_mean(&mut self) {
        let m = self.mean_reward();
        for s in &mut self.steps {
            s.reward = s.reward - m;
        }
    }
}

/// Batch averages reported alongside the loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub surrogate: f64,
    pub kl: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

fn check_steps<T: Scalar>(steps: &[&RolloutStep<T>]) -> Result<()> {
    if steps.is_empty() {
        return Err(Error::Empty("rollout batch"));
    }
    Ok(())
}

/// Loss over `steps` with reference means precomputed; accumulates the
/// parameter gradient into `grad` when given.
fn loss_impl<T: Scalar>(
    steps: &[&RolloutStep<T>],
    ref_means: &[&[T]],
    policy: &PolicyParams<T>,
    reference: &PolicyParams<T>,
    epsilon: T,
    beta: T,
    mut grad: Option<&mut PolicyParams<T>>,
) -> Result<LossStats> {
    check_steps(steps)?;
    let n = T::from_usize_lossy(steps.len());
    let (lo, hi) = (T::one() - epsilon, T::one() + epsilon);
    let (mut loss, mut surr, mut kl_sum, mut ratio_sum) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut clipped = 0usize;
    for (s, ref_mean) in steps.iter().zip(ref_means) {
        let tape = policy.net.forward_tape(s.observation.as_slice())?;
        let mean = tape.output();
        let (lp, dlp_dm, dlp_ds) = log_prob_with_grad(mean, &policy.log_std, &s.raw_action);
        let ratio = (lp - s.log_prob_old).exp();
        let r = s.reward;
        let plain = ratio * r;
        let clip = ratio.max(lo).min(hi) * r;
        let (obj, coef) = if plain <= clip {
            (plain, ratio * r)
        } else {
            clipped += 1;
            (clip, T::zero())
        };
        let (kl, dkl_dm, dkl_ds) = kl_with_grad(mean, &policy.log_std, ref_mean, &reference.log_std);
        loss = loss - (obj - beta * kl);
        surr = surr + obj;
        kl_sum = kl_sum + kl;
        ratio_sum = ratio_sum + ratio;
        if let Some(g) = grad.as_deref_mut() {
            let gm: Vec<T> = dlp_dm
                .iter()
                .zip(&dkl_dm)
                .map(|(&a, &b)| -(coef * a - beta * b) / n)
                .collect();
            policy.net.backward(&tape, &gm, &mut g.net);
            for ((d, &a), &b) in g.log_std.iter_mut().zip(&dlp_ds).zip(&dkl_ds) {
                *d = *d - (coef * a - beta * b) / n;
            }
        }
    }
    let k = steps.len() as f64;
    Ok(LossStats {
        loss: (loss / n).to_f64_lossy(),
        surrogate: surr.to_f64_lossy() / k,
        kl: kl_sum.to_f64_lossy() / k,
        mean_ratio: ratio_sum.to_f64_lossy() / k,
        clip_fraction: clipped as f64 / k,
    })
}

fn reference_means<T: Scalar>(steps: &[&RolloutStep<T>], reference: &PolicyParams<T>) -> Result<Vec<Vec<T>>> {
    steps
        .iter()
        .map(|s| reference.net.forward(s.observation.as_slice()))
        .collect()
}

/// Negated clipped-ratio objective with KL penalty, averaged over steps:
/// `−mean[min(ρR, clip(ρ, 1−ε, 1+ε)R) − β·KL(π_θ ‖ π_ref)]`, where `ρ` is
/// the ratio of the current density to the recorded sampling density.
pub fn ppo_kl_loss<T: Scalar>(
    batch: &RolloutBatch<T>,
    policy: &PolicyParams<T>,
    reference: &PolicyParams<T>,
    epsilon: T,
    beta: T,
) -> Result<LossStats> {
    let steps: Vec<&RolloutStep<T>> = batch.steps.iter().collect();
    let means = reference_means(&steps, reference)?;
    let refs: Vec<&[T]> = means.iter().map(|m| m.as_slice()).collect();
    loss_impl(&steps, &refs, policy, reference, epsilon, beta, None)
}

/// Loss and its gradient with respect to every policy parameter.
pub fn ppo_kl_loss_grad<T: Scalar>(
    batch: &RolloutBatch<T>,
    policy: &PolicyParams<T>,
    reference: &PolicyParams<T>,
    epsilon: T,
    beta: T,
) -> Result<(LossStats, PolicyParams<T>)> {
    let steps: Vec<&RolloutStep<T>> = batch.steps.iter().collect();
    let means = reference_means(&steps, reference)?;
    let refs: Vec<&[T]> = means.iter().map(|m| m.as_slice()).collect();
    let mut grad = policy.zeros_like();
    let stats = loss_impl(&steps, &refs, policy, reference, epsilon, beta, Some(&mut grad))?;
    Ok((stats, grad))
}

/// Optimizer state plus the three policy snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrainState<T: Scalar> {
    pub policy: PolicyParams<T>,
    /// Sampling policy of the current iteration.
    pub old: PolicyParams<T>,
    /// Fixed at construction.
    pub reference: PolicyParams<T>,
    pub value: ValueParams<T>,
    pub opt: OptState<T>,
    pub iteration: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &RunConfig<T>, value: ValueParams<T>, master_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ POLICY_SALT);
        let policy = PolicyParams::init(
            cfg.encoder.encoder_dim,
            &cfg.train.hidden_sizes,
            cfg.train.log_std_init,
            &mut rng,
        )?;
        Ok(Self {
            old: policy.clone(),
            reference: policy.clone(),
            opt: OptState::for_params(&policy),
            policy,
            value,
            iteration: 0,
        })
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub episodes: usize,
    pub steps: usize,
    pub successes: usize,
    pub collisions: usize,
    /// Mean over episodes of the summed combined reward.
    pub mean_return: f64,
    pub mean_reward_dense: f64,
    /// Mean `KL(π_θ ‖ π_ref)` over the batch states after the update.
    pub mean_kl: f64,
    pub loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    /// Success rate (%) over the last few iterations.
    pub sr_window: f64,
}

fn assistance_for(mode: TrainAssistance, episode: usize) -> Assistance {
    match mode {
        TrainAssistance::L1 => Assistance::L1,
        TrainAssistance::L2 => Assistance::L2,
        TrainAssistance::L3 => Assistance::L3,
        TrainAssistance::Mixed => Assistance::ALL[episode % 3],
    }
}

fn mix(seed: u64, salt: u64, i: u64) -> u64 {
    // splitmix-style finalizer
    let mut z = seed ^ salt ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collects episodes with `π_old ← π_θ`, then runs `inner_epochs` passes of
/// minibatch updates over them.
pub fn train_iteration<T: Scalar>(
    state: &mut TrainState<T>,
    scenarios: &[Scenario<T>],
    cfg: &RunConfig<T>,
    env: &Env<T>,
    master_seed: u64,
) -> Result<IterationStats> {
    if scenarios.is_empty() {
        return Err(Error::Empty("training scenarios"));
    }
    let tc = &cfg.train;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(master_seed, ROLLOUT_SALT, state.iteration as u64));
    state.old = state.policy.clone();
    let mut episodes = Vec::with_capacity(tc.episodes_per_iteration);
    for e in 0..tc.episodes_per_iteration {
        let sc = &scenarios[rng.random_range(0..scenarios.len())];
        let seed = rng.random::<u64>();
        let pilot = GaussianPilot {
            policy: &state.old,
            greedy: false,
        };
        episodes.push(run_episode(&pilot, &state.value, sc, assistance_for(tc.train_assistance, e), env, seed)?);
    }
    let mut batch = RolloutBatch::from_episodes(&episodes, &cfg.reward);
    let mean_return = batch.steps.iter().fold(0.0, |a, s| a + s.reward.to_f64_lossy()) / episodes.len() as f64;
    let mean_dense = batch.steps.iter().fold(0.0, |a, s| a + s.reward_dense.to_f64_lossy()) / batch.len().max(1) as f64;
    if tc.baseline {
        batch.subtract_mean();
    }
    let all: Vec<&RolloutStep<T>> = batch.steps.iter().collect();
    let ref_means = reference_means(&all, &state.reference)?;
    let oc = &cfg.optimizer;
    let mut order: Vec<usize> = (0..batch.episodes.len()).collect();
    for _ in 0..tc.inner_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(oc.batch_size.max(1)) {
            let idx: Vec<usize> = chunk.iter().flat_map(|&e| batch.episodes[e].clone()).collect();
            if idx.is_empty() {
                continue;
            }
            let steps: Vec<&RolloutStep<T>> = idx.iter().map(|&i| &batch.steps[i]).collect();
            let refs: Vec<&[T]> = idx.iter().map(|&i| ref_means[i].as_slice()).collect();
            let mut grad = state.policy.zeros_like();
            loss_impl(&steps, &refs, &state.policy, &state.reference, oc.epsilon, oc.beta, Some(&mut grad))?;
            opt_step(&mut state.policy, &grad, &mut state.opt, oc)?;
        }
    }
    let after = if all.is_empty() {
        LossStats::default()
    } else {
        let refs: Vec<&[T]> = ref_means.iter().map(|m| m.as_slice()).collect();
        loss_impl(&all, &refs, &state.policy, &state.reference, oc.epsilon, oc.beta, None)?
    };
    state.iteration += 1;
    Ok(IterationStats {
        iteration: state.iteration,
        episodes: episodes.len(),
        steps: batch.len(),
        successes: episodes.iter().filter(|e| e.outcome() == Outcome::Success).count(),
        collisions: episodes.iter().filter(|e| e.outcome() == Outcome::Collision).count(),
        mean_return,
        mean_reward_dense: mean_dense,
        mean_kl: after.kl,
        loss: after.loss,
        mean_ratio: after.mean_ratio,
        clip_fraction: after.clip_fraction,
        sr_window: 0.0,
    })
}

/// Guidance-free state features along an oracle-following flight, start included.
pub fn expert_states<T: Scalar>(scenario: &Scenario<T>, env: &Env<T>) -> Result<Vec<FeatureVector<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let goal = scenario.goal_position();
    let mut pose = scenario.start;
    let mut out = vec![env.state_features(&pose, scenario)?];
    for _ in 0..env.episode.max_steps {
        if euclidean_distance(&pose.position(), &goal) <= env.episode.success_radius {
            break;
        }
        let obs = &out[out.len() - 1];
        let d = OraclePilot.act(obs, &pose, scenario, &env.bounds, &mut rng)?;
        pose = apply_action(&pose, &d.action, &env.bounds)?;
        out.push(env.state_features(&pose, scenario)?);
    }
    Ok(out)
}

/// Expert state sequences from freshly generated scenarios, alternating
/// easy and hard.
pub fn expert_dataset<T: Scalar>(env: &Env<T>, count: usize, seed: u64) -> Result<Vec<Vec<FeatureVector<T>>>> {
    (0..count)
        .map(|i| {
            let d = if i % 2 == 0 { Difficulty::Easy } else { Difficulty::Hard };
            let sc = generate_scenario(mix(seed, EXPERT_SALT, i as u64), d, &env.world)?;
            expert_states(&sc, env)
        })
        .collect()
}

/// Fits a fresh value model on expert flights; every tenth flight is held out.
pub fn fit_expert_value<T: Scalar>(cfg: &RunConfig<T>, env: &Env<T>, master_seed: u64) -> Result<(ValueParams<T>, FitReport)> {
    let data = expert_dataset(env, cfg.train.expert_episodes, master_seed)?;
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, s) in data.into_iter().enumerate() {
        if i % 10 == 9 {
            held.push(s);
        } else {
            train.push(s);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ VALUE_SALT);
    let mut value = ValueParams::init(cfg.encoder.encoder_dim, &cfg.train.hidden_sizes, &mut rng)?;
    let vcfg = OptimizerConfig {
        learning_rate: cfg.train.value_learning_rate,
        ..cfg.optimizer
    };
    let report = fit_value_model(
        &mut value,
        &train,
        &held,
        cfg.reward.margin,
        cfg.train.value_epochs,
        &vcfg,
        master_seed ^ VALUE_SALT,
    )?;
    Ok((value, report))
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T: Scalar> {
    pub state: TrainState<T>,
    pub log: Vec<IterationStats>,
    pub value_report: FitReport,
    pub checkpoint: Checkpoint<T>,
}

/// Observers of a training run. Both default to doing nothing.
pub trait TrainObserver<T: Scalar> {
    fn iteration(&mut self, _stats: &IterationStats) -> Result<()> {
        Ok(())
    }
    fn checkpoint(&mut self, _ckpt: &Checkpoint<T>) -> Result<()> {
        Ok(())
    }
}

impl<T: Scalar> TrainObserver<T> for () {}

/// Fits the value model, then runs `iterations` policy iterations.
///
/// Checkpoints go to the observer every `checkpoint_every` iterations and
/// after the last one.
pub fn train_run<T: Scalar>(
    cfg: &RunConfig<T>,
    scenarios: &[Scenario<T>],
    master_seed: u64,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutput<T>> {
    let env = Env::from_config(cfg)?;
    if scenarios.is_empty() {
        return Err(Error::Empty("training scenarios"));
    }
    let (value, value_report) = fit_expert_value(cfg, &env, master_seed)?;
    let mut state = TrainState::new(cfg, value, master_seed)?;
    let mut log: Vec<IterationStats> = Vec::with_capacity(cfg.train.iterations);
    for _ in 0..cfg.train.iterations {
        let mut stats = train_iteration(&mut state, scenarios, cfg, &env, master_seed)?;
        let window = &log[log.len().saturating_sub(SR_WINDOW - 1)..];
        let (s, e) = window
            .iter()
            .chain(std::iter::once(&stats))
            .fold((0, 0), |(s, e), x| (s + x.successes, e + x.episodes));
        stats.sr_window = 100.0 * s as f64 / e.max(1) as f64;
        observer.iteration(&stats)?;
        let every = cfg.train.checkpoint_every;
        if every > 0 && state.iteration % every == 0 && state.iteration < cfg.train.iterations {
            observer.checkpoint(&Checkpoint::new(state.iteration, cfg.clone(), state.policy.clone(), state.value.clone()))?;
        }
        log.push(stats);
    }
    let checkpoint = Checkpoint::new(state.iteration, cfg.clone(), state.policy.clone(), state.value.clone());
    observer.checkpoint(&checkpoint)?;
    Ok(TrainOutput {
        state,
        log,
        value_report,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_policy(seed: u64) -> PolicyParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::init(3, &[4], -0.5, &mut rng).unwrap()
    }

    fn step(obs: Vec<f64>, raw: Vec<f64>, lp_old: f64, r: f64) -> RolloutStep<f64> {
        RolloutStep {
            observation: FeatureVector(obs),
            raw_action: raw,
            log_prob_old: lp_old,
            reward: r,
            reward_dense: 0.0,
            t: 1,
        }
    }

    fn lp(p: &PolicyParams<f64>, obs: &[f64], raw: &[f64]) -> f64 {
        let mean = p.net.forward(obs).unwrap();
        log_prob_with_grad(&mean, &p.log_std, raw).0
    }

    fn one_step_batch(p: &PolicyParams<f64>, ratio: f64, r: f64) -> RolloutBatch<f64> {
        let obs = vec![0.3, -0.2, 0.5];
        let raw = vec![0.1, 0.0, -0.3, 0.2, 0.4, -0.1];
        let cur = lp(p, &obs, &raw);
        RolloutBatch {
            steps: vec![step(obs, raw, cur - ratio.ln(), r)],
            episodes: vec![0..1],
        }
    }

    #[test]
    fn total_reward_cases() {
        assert_eq!(total_step_reward(0.0, 2.0, 1.0, 1.0), 2.0);
        assert_eq!(total_step_reward(1.0, 1.0, 0.5, 0.5), 1.0);
        assert_eq!(total_step_reward(3.0, 0.7, 0.0, 1.0), 0.7);
    }

    #[test]
    fn loss_identical_policies() {
        let p = tiny_policy(1);
        let b = one_step_batch(&p, 1.0, 1.0);
        let s = ppo_kl_loss(&b, &p, &p, 0.2, 0.1).unwrap();
        assert_eq!(s.loss, -1.0);
        assert_eq!(s.kl, 0.0);
    }

    #[test]
    fn loss_clipped_cases() {
        let p = tiny_policy(2);
        let s = ppo_kl_loss(&one_step_batch(&p, 2.0, 1.0), &p, &p, 0.2, 0.1).unwrap();
        assert!((s.loss + 1.2).abs() < 1e-12);
        let s = ppo_kl_loss(&one_step_batch(&p, 0.5, -1.0), &p, &p, 0.2, 0.1).unwrap();
        assert!((s.loss - 0.8).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        let p = tiny_policy(3);
        let err = ppo_kl_loss(&RolloutBatch::default(), &p, &p, 0.2, 0.1).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
    }

    #[test]
    fn baseline_centers_rewards() {
        let mut b = RolloutBatch {
            steps: vec![step(vec![0.0], vec![0.0], 0.0, 1.0), step(vec![0.0], vec![0.0], 0.0, 3.0)],
            episodes: vec![0..2],
        };
        b.subtract_mean();
        assert_eq!(b.steps[0].reward, -1.0);
        assert_eq!(b.steps[1].reward, 1.0);
    }
}
