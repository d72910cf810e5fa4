//! Bias-corrected adaptive-moment (Adam) updates.

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::config::OptimizerConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OptState<T: Scalar> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Scalar> OptState<T> {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            step: 0,
        }
    }

    pub fn for_params<P: Parameters<T>>(p: &P) -> Self {
        Self::new(p.num_params())
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam step on `params` with gradient `grads`.
pub fn opt_step<T: Scalar, P: Parameters<T>>(
    params: &mut P,
    grads: &P,
    state: &mut OptState<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<()> {
    let n = params.num_params();
    if grads.num_params() != n || state.m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if grads.num_params() != n {
                grads.num_params()
            } else {
                state.m.len()
            },
        });
    }
    state.step += 1;
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let t = state.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = T::lit(EPS);
    let mut k = 0;
    let grad_slices = grads.slices();
    for (p, g) in params.slices_mut().into_iter().zip(grad_slices) {
        for (pi, &gi) in p.iter_mut().zip(g) {
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = b1 * *m + (T::one() - b1) * gi;
            *v = b2 * *v + (T::one() - b2) * gi * gi;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *pi = *pi - lr * mhat / (vhat.sqrt() + eps);
            k += 1;
        }
    }
    params.post_update();
    Ok(())
}
