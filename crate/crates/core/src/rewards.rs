//! Value-model dense trajectory reward, thresholded verifiable reward and
//! value-model training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{OptimizerConfig, RLevel, ShapingMode};
use crate::encoder::FeatureVector;
use crate::error::{Error, Result};
use crate::neural::{opt_step, value_forward, OptState, Parameters, ValueParams};
use crate::scalar::Scalar;

/// Value estimates `v_1 … v_{n+1}` along a trajectory of `n` transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", transparent)]
pub struct ValueSequence<T: Scalar>(pub Vec<T>);

impl<T: Scalar> ValueSequence<T> {
    fn require(&self, need: usize) -> Result<()> {
        if self.0.len() < need {
            return Err(Error::SequenceTooShort {
                need,
                got: self.0.len(),
            });
        }
        Ok(())
    }

    /// Fraction of adjacent pairs with `v_t < v_{t+1}`.
    pub fn monotone_fraction(&self) -> Option<f64> {
        let pairs = self.0.len().checked_sub(1).filter(|&p| p > 0)?;
        let up = self.0.windows(2).filter(|w| w[0] < w[1]).count();
        Some(up as f64 / pairs as f64)
    }
}

/// Reward for the transition `v_t → v_next` at step `t` (1-based).
///
/// Paper-literal mode returns `γ^t (v_t − v_next)`; potential mode returns
/// the undiscounted shaping term `γ v_next − v_t`.
pub fn per_step_shaped_reward<T: Scalar>(v_t: T, v_next: T, gamma: T, mode: ShapingMode, t: usize) -> T {
    match mode {
        ShapingMode::PaperLiteral => gamma.powi(t as i32) * (v_t - v_next),
        ShapingMode::Potential => gamma * v_next - v_t,
    }
}

/// Weight of step `t` when summing per-step rewards into a trajectory total:
/// 1 in paper-literal mode (the step reward already carries `γ^t`), `γ^{t−1}`
/// in potential mode.
pub fn step_weight<T: Scalar>(gamma: T, mode: ShapingMode, t: usize) -> T {
    match mode {
        ShapingMode::PaperLiteral => T::one(),
        ShapingMode::Potential => gamma.powi(t as i32 - 1),
    }
}

/// Whole-trajectory dense reward.
///
/// Paper-literal: `Σ_{t=1}^{n} γ^t (v_t − v_{t+1})`.
/// Potential: `Σ_{t=1}^{n} γ^{t−1} (γ v_{t+1} − v_t)`.
pub fn dense_trajectory_reward<T: Scalar>(vs: &ValueSequence<T>, gamma: T, mode: ShapingMode) -> Result<T> {
    vs.require(2)?;
    Ok(vs.0.windows(2).enumerate().fold(T::zero(), |acc, (i, w)| {
        let t = i + 1;
        acc + step_weight(gamma, mode, t) * per_step_shaped_reward(w[0], w[1], gamma, mode, t)
    }))
}

/// Thresholded inverse-dissimilarity reward `min(1 / (1 − sim), cap)`.
///
/// The cap is `r_level`, or `r_max` when the level is infinite, which also
/// absorbs the singularity at `sim = 1`.
pub fn verifiable_reward<T: Scalar>(sim: T, r_level: RLevel<T>, r_max: T) -> T {
    let cap = r_level.cap(r_max);
    let sim = sim.max(-T::one()).min(T::one());
    let gap = T::one() - sim;
    if gap * cap <= T::one() {
        cap
    } else {
        (T::one() / gap).min(cap)
    }
}

/// Mean hinge `max(0, m + v_t − v_{t+1})` over adjacent pairs.
pub fn value_ranking_loss<T: Scalar>(vs: &ValueSequence<T>, margin: T) -> Result<T> {
    Ok(ranking_loss_with_grad(vs, margin)?.0)
}

/// Loss and its gradient with respect to every entry of `vs`.
pub fn ranking_loss_with_grad<T: Scalar>(vs: &ValueSequence<T>, margin: T) -> Result<(T, Vec<T>)> {
    vs.require(2)?;
    let pairs = T::from_usize_lossy(vs.0.len() - 1);
    let mut grad = vec![T::zero(); vs.0.len()];
    let mut loss = T::zero();
    for (i, w) in vs.0.windows(2).enumerate() {
        let h = margin - (w[1] - w[0]);
        if h > T::zero() {
            loss = loss + h;
            grad[i] = grad[i] + T::one() / pairs;
            grad[i + 1] = grad[i + 1] - T::one() / pairs;
        }
    }
    Ok((loss / pairs, grad))
}

/// Values of a feature sequence under `v`.
pub fn value_sequence<T: Scalar>(v: &ValueParams<T>, states: &[FeatureVector<T>]) -> Result<ValueSequence<T>> {
    states
        .iter()
        .map(|s| value_forward(v, s))
        .collect::<Result<_>>()
        .map(ValueSequence)
}

/// Ranking loss of one state sequence and its parameter gradient, accumulated into `grad`.
pub fn ranking_loss_backward<T: Scalar>(
    v: &ValueParams<T>,
    states: &[FeatureVector<T>],
    margin: T,
    grad: &mut ValueParams<T>,
) -> Result<T> {
    let tapes = states
        .iter()
        .map(|s| v.net.forward_tape(s.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let vs = ValueSequence(tapes.iter().map(|t| t.output()[0]).collect());
    let (loss, dv) = ranking_loss_with_grad(&vs, margin)?;
    for (tape, d) in tapes.iter().zip(dv) {
        if d != T::zero() {
            v.net.backward(tape, &[d], &mut grad.net);
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub heldout_monotone_fraction: Option<f64>,
    pub train_monotone_fraction: Option<f64>,
}

fn monotone_fraction<T: Scalar>(v: &ValueParams<T>, seqs: &[Vec<FeatureVector<T>>]) -> Result<Option<f64>> {
    let (mut up, mut pairs) = (0usize, 0usize);
    for s in seqs {
        let vs = value_sequence(v, s)?;
        pairs += vs.0.len().saturating_sub(1);
        up += vs.0.windows(2).filter(|w| w[0] < w[1]).count();
    }
    Ok((pairs > 0).then(|| up as f64 / pairs as f64))
}

fn mean_loss<T: Scalar>(v: &ValueParams<T>, seqs: &[Vec<FeatureVector<T>>], margin: T) -> Result<f64> {
    let mut total = 0.0;
    for s in seqs {
        total += value_ranking_loss(&value_sequence(v, s)?, margin)?.to_f64_lossy();
    }
    Ok(total / seqs.len() as f64)
}

/// Trains `v` so values increase along expert state sequences.
///
/// Each gradient step averages the ranking loss over `cfg.batch_size`
/// sequences; sequences are reshuffled every epoch from `shuffle_seed`.
pub fn fit_value_model<T: Scalar>(
    v: &mut ValueParams<T>,
    train: &[Vec<FeatureVector<T>>],
    heldout: &[Vec<FeatureVector<T>>],
    margin: T,
    epochs: usize,
    cfg: &OptimizerConfig<T>,
    shuffle_seed: u64,
) -> Result<FitReport> {
    let train: Vec<&Vec<FeatureVector<T>>> = train.iter().filter(|s| s.len() >= 2).collect();
    if train.is_empty() {
        return Err(Error::Empty("expert dataset"));
    }
    let owned: Vec<Vec<FeatureVector<T>>> = train.iter().map(|s| (*s).clone()).collect();
    let mut state = OptState::for_params(v);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    let batch = cfg.batch_size.max(1);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grad = v.zeros_like();
            for &i in chunk {
                ranking_loss_backward(v, train[i], margin, &mut grad)?;
            }
            let scale = T::one() / T::from_usize_lossy(chunk.len());
            let mut scaled = grad.zeros_like();
            scaled.add_scaled(&grad, scale);
            opt_step(v, &scaled, &mut state, cfg)?;
        }
        epoch_losses.push(mean_loss(v, &owned, margin)?);
    }
    Ok(FitReport {
        epoch_losses,
        heldout_monotone_fraction: monotone_fraction(v, heldout)?,
        train_monotone_fraction: monotone_fraction(v, &owned)?,
    })
}
