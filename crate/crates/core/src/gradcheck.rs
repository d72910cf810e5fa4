//! Central finite-difference checks of the analytic gradients, on seeded
//! random instances. Each function returns the relative error
//! `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::FeatureVector;
use crate::error::Result;
use crate::neural::{log_prob_with_grad, Mlp, Parameters, PolicyParams, ValueParams};
use crate::rewards::{ranking_loss_backward, value_ranking_loss, value_sequence};
use crate::rlopt::{ppo_kl_loss, ppo_kl_loss_grad, RolloutBatch, RolloutStep};

pub const STEP: f64 = 1e-5;

fn flat<P: Parameters<f64>>(p: &P) -> Vec<f64> {
    p.slices().into_iter().flatten().copied().collect()
}

fn perturbed<P: Parameters<f64>>(p: &P, k: usize, delta: f64) -> P {
    let mut q = p.clone();
    let mut k = k;
    for s in q.slices_mut() {
        if k < s.len() {
            s[k] += delta;
            break;
        }
        k -= s.len();
    }
    q
}

fn numeric<P: Parameters<f64>>(p: &P, f: &dyn Fn(&P) -> Result<f64>) -> Result<Vec<f64>> {
    (0..p.num_params())
        .map(|k| Ok((f(&perturbed(p, k, STEP))? - f(&perturbed(p, k, -STEP))?) / (2.0 * STEP)))
        .collect()
}

pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(n));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amp..amp)).collect()
}

/// Network shapes exercised by the checks.
pub const SHAPES: [&[usize]; 4] = [&[3, 1], &[4, 5, 2], &[6, 8, 8, 3], &[5, 16, 6]];

/// Gradient of `Σ c_i · out_i` for a random MLP of the given shape.
pub fn mlp_error(sizes: &[usize], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::<f64>::init(sizes, 1.0, &mut rng)?;
    let x = random_vec(&mut rng, sizes[0], 1.5);
    let c = random_vec(&mut rng, sizes[sizes.len() - 1], 1.0);
    let f = |m: &Mlp<f64>| -> Result<f64> { Ok(m.forward(&x)?.iter().zip(&c).map(|(o, w)| o * w).sum()) };
    let tape = net.forward_tape(&x)?;
    let mut g = net.zeros_like();
    net.backward(&tape, &c, &mut g);
    Ok(relative_error(&flat(&g), &numeric(&net, &f)?))
}

fn hinge_safe(vs: &[f64], margin: f64) -> bool {
    vs.windows(2).all(|w| (margin - (w[1] - w[0])).abs() > 1e-3)
}

/// Ranking loss over a random state sequence, differentiated through the
/// value network. Instances with a pair sitting on the hinge kink are
/// resampled from the same stream.
pub fn ranking_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 5;
    let margin = 0.05;
    loop {
        let v = ValueParams::<f64>::init(dim, &[8], &mut rng)?;
        let len = rng.random_range(3..9);
        let states: Vec<FeatureVector<f64>> = (0..len).map(|_| FeatureVector(random_vec(&mut rng, dim, 1.0))).collect();
        let vs = value_sequence(&v, &states)?;
        if !hinge_safe(&vs.0, margin) || value_ranking_loss(&vs, margin)? == 0.0 {
            continue;
        }
        let mut g = v.zeros_like();
        ranking_loss_backward(&v, &states, margin, &mut g)?;
        let f = |p: &ValueParams<f64>| value_ranking_loss(&value_sequence(p, &states)?, margin);
        return Ok(relative_error(&flat(&g), &numeric(&v, &f)?));
    }
}

/// Clipped-ratio loss with KL penalty on a random batch. Ratios are drawn
/// away from the clip boundaries so the objective is smooth at the point.
pub fn ppo_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 4;
    let eps = 0.2;
    let beta = rng.random_range(0.0..1.0);
    let policy = PolicyParams::<f64>::init(dim, &[6], -0.5, &mut rng)?;
    let mut reference = PolicyParams::<f64>::init(dim, &[6], -0.7, &mut rng)?;
    // the reference must differ in mean for the KL gradient to matter
    for p in reference.net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let mut steps = Vec::new();
    for t in 0..rng.random_range(2..7) {
        let obs = random_vec(&mut rng, dim, 1.0);
        let raw = random_vec(&mut rng, 6, 1.0);
        let mean = policy.net.forward(&obs)?;
        let lp = log_prob_with_grad(&mean, &policy.log_std, &raw).0;
        let ratio = loop {
            let r: f64 = rng.random_range(0.5..1.5);
            if (r - (1.0 - eps)).abs() > 0.02 && (r - (1.0 + eps)).abs() > 0.02 {
                break r;
            }
        };
        steps.push(RolloutStep {
            observation: FeatureVector(obs),
            raw_action: raw,
            log_prob_old: lp - ratio.ln(),
            reward: rng.random_range(-2.0..2.0),
            reward_dense: 0.0,
            t: t + 1,
        });
    }
    let n = steps.len();
    let batch = RolloutBatch {
        steps,
        episodes: vec![0..n],
    };
    let (_, g) = ppo_kl_loss_grad(&batch, &policy, &reference, eps, beta)?;
    let f = |p: &PolicyParams<f64>| Ok(ppo_kl_loss(&batch, p, &reference, eps, beta)?.loss);
    Ok(relative_error(&flat(&g), &numeric(&policy, &f)?))
}
