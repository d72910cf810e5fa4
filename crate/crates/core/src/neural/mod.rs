//! Gaussian policy and scalar value networks with analytic gradients.

mod checkpoint;
mod gaussian;
mod mlp;
mod optim;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_VERSION};
pub use gaussian::{gaussian_kl, gaussian_log_prob, kl_with_grad, log_prob_with_grad};
pub use mlp::{Mlp, MlpTape};
pub use optim::{opt_step, OptState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::FeatureVector;
use crate::error::Result;
use crate::scalar::Scalar;

pub const ACTION_DIM: usize = 6;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Anything the optimizer can update. Gradients share the parameter type.
pub trait Parameters<T: Scalar>: Clone {
    fn slices(&self) -> Vec<&[T]>;
    fn slices_mut(&mut self) -> Vec<&mut [T]>;
    fn zeros_like(&self) -> Self;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Re-imposes parameter constraints after an update.
    fn post_update(&mut self) {}

    /// `self += scale · other`.
    fn add_scaled(&mut self, other: &Self, scale: T) {
        let src = other.slices();
        for (d, s) in self.slices_mut().into_iter().zip(src) {
            d.iter_mut().zip(s).for_each(|(a, &b)| *a = *a + scale * b);
        }
    }
}

impl<T: Scalar> Parameters<T> for Mlp<T> {
    fn slices(&self) -> Vec<&[T]> {
        vec![self.params()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.params_mut()]
    }

    fn zeros_like(&self) -> Self {
        Mlp::zeros_like(self)
    }
}

/// Diagonal Gaussian policy: network outputs the mean, `log_std` is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PolicyParams<T: Scalar> {
    pub net: Mlp<T>,
    pub log_std: Vec<T>,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], log_std_init: T, rng: &mut R) -> Result<Self> {
        let sizes = layer_sizes(obs_dim, hidden, ACTION_DIM);
        let mut p = Self {
            net: Mlp::init(&sizes, 0.01, rng)?,
            log_std: vec![log_std_init; ACTION_DIM],
        };
        p.post_update();
        Ok(p)
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn std(&self) -> Vec<T> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }
}

/// `(mean, std)` of the action distribution at `obs`.
pub fn policy_forward<T: Scalar>(p: &PolicyParams<T>, obs: &FeatureVector<T>) -> Result<(Vec<T>, Vec<T>)> {
    Ok((p.net.forward(obs.as_slice())?, p.std()))
}

impl<T: Scalar> Parameters<T> for PolicyParams<T> {
    fn slices(&self) -> Vec<&[T]> {
        vec![self.net.params(), &self.log_std]
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.net.params_mut(), &mut self.log_std]
    }

    fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
            log_std: vec![T::zero(); self.log_std.len()],
        }
    }

    fn post_update(&mut self) {
        let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
        for l in &mut self.log_std {
            *l = l.max(lo).min(hi);
        }
    }
}

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ValueParams<T: Scalar> {
    pub net: Mlp<T>,
}

impl<T: Scalar> ValueParams<T> {
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Mlp::init(&layer_sizes(obs_dim, hidden, 1), 1.0, rng)?,
        })
    }
}

pub fn value_forward<T: Scalar>(v: &ValueParams<T>, obs: &FeatureVector<T>) -> Result<T> {
    Ok(v.net.forward(obs.as_slice())?[0])
}

impl<T: Scalar> Parameters<T> for ValueParams<T> {
    fn slices(&self) -> Vec<&[T]> {
        vec![self.net.params()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.net.params_mut()]
    }

    fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
        }
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_policy_outputs_zero_mean() {
        let p = PolicyParams {
            net: Mlp::<f64>::zeros(&[4, 8, 6]).unwrap(),
            log_std: vec![-0.5; 6],
        };
        let (m, s) = policy_forward(&p, &FeatureVector(vec![0.3, -0.1, 0.9, 0.0])).unwrap();
        assert_eq!(m, vec![0.0; 6]);
        assert!(s.iter().all(|&v| v == (-0.5f64).exp()));
    }

    #[test]
    fn hand_set_linear_policy() {
        // 2 inputs → 6 outputs, only the first two rows populated
        let mut w = vec![0.0f64; 2 * 6 + 6];
        w[0] = 1.0;
        w[1] = 2.0;
        w[2] = -1.0;
        w[3] = 0.5;
        w[12] = 0.1; // bias of output 0
        let p = PolicyParams {
            net: Mlp::from_parts(&[2, 6], w).unwrap(),
            log_std: vec![0.0; 6],
        };
        let obs = FeatureVector(vec![3.0, 4.0]);
        let (m, _) = policy_forward(&p, &obs).unwrap();
        assert_eq!(m[0], 1.0 * 3.0 + 2.0 * 4.0 + 0.1);
        assert_eq!(m[1], -3.0 + 0.5 * 4.0);
        assert_eq!(policy_forward(&p, &obs).unwrap().0, m);
    }

    #[test]
    fn value_forward_cases() {
        let v = ValueParams {
            net: Mlp::<f64>::zeros(&[3, 4, 1]).unwrap(),
        };
        assert_eq!(value_forward(&v, &FeatureVector(vec![1.0, 2.0, 3.0])).unwrap(), 0.0);
        let v = ValueParams {
            net: Mlp::from_parts(&[2, 1], vec![0.5, -2.0, 1.0]).unwrap(),
        };
        let obs = FeatureVector(vec![4.0, 1.5]);
        assert_eq!(value_forward(&v, &obs).unwrap(), 0.5 * 4.0 - 2.0 * 1.5 + 1.0);
        assert_eq!(value_forward(&v, &obs).unwrap(), value_forward(&v, &obs).unwrap());
        assert!(value_forward(&v, &FeatureVector(vec![1.0])).is_err());
    }

    #[test]
    fn log_std_clamped_after_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = PolicyParams::<f64>::init(4, &[8], 0.0, &mut rng).unwrap();
        let mut g = p.zeros_like();
        g.log_std = vec![-1.0; 6];
        let mut st = OptState::for_params(&p);
        let cfg = crate::config::OptimizerConfig {
            learning_rate: 5.0,
            ..Default::default()
        };
        opt_step(&mut p, &g, &mut st, &cfg).unwrap();
        assert!(p.log_std.iter().all(|&l| l == LOG_STD_MAX));
    }
}
