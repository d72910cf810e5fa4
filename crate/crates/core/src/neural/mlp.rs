//! Dense feed-forward network: `tanh` hidden layers, linear output.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Flat parameter storage. Layer `l` maps `sizes[l] → sizes[l+1]` and is
/// laid out as a row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mlp<T: Scalar> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Per-layer inputs recorded during a forward pass; the last entry is the output.
#[derive(Debug, Clone)]
pub struct MlpTape<T: Scalar> {
    acts: Vec<Vec<T>>,
}

impl<T: Scalar> MlpTape<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("tape holds at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Random `rows × cols` matrix with orthonormal rows or columns, times `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, k) = (rows.max(cols), rows.min(cols));
    // k orthonormal vectors of length n
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = gain
                * if rows <= cols {
                    basis[r][c]
                } else {
                    basis[c][r]
                };
        }
    }
    m
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![T::zero(); param_count(sizes)],
        })
    }

    /// Orthogonal weights (gain √2 hidden, `out_gain` on the last layer), zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_gain: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { out_gain } else { 2f64.sqrt() };
            for (dst, w) in net.params[off..off + i * o].iter_mut().zip(orthogonal(o, i, gain, rng)) {
                *dst = T::lit(w);
            }
            off += i * o + o;
        }
        Ok(net)
    }

    /// Assembles a network from explicit weights, e.g. in tests.
    pub fn from_parts(sizes: &[usize], params: Vec<T>) -> Result<Self> {
        let net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            params: vec![T::zero(); self.params.len()],
        }
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_tape(x)?.acts.pop().unwrap())
    }

    pub fn forward_tape(&self, x: &[T]) -> Result<MlpTape<T>> {
        self.check_input(x)?;
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + i * o];
            let b = &self.params[off + i * o..off + i * o + o];
            let input = acts.last().unwrap();
            let hidden = l + 1 < layers;
            let out: Vec<T> = w
                .chunks_exact(i)
                .zip(b)
                .map(|(row, &bias)| {
                    let z = dot(row, input) + bias;
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += i * o + o;
        }
        Ok(MlpTape { acts })
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`.
    pub fn backward(&self, tape: &MlpTape<T>, grad_out: &[T], grad: &mut Mlp<T>) {
        debug_assert_eq!(grad.params.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..layers).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // through tanh: d/dz = 1 − tanh²
                for (d, &a) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    *d = *d * (T::one() - a * a);
                }
            }
            let input = &tape.acts[l];
            let off = offsets[l];
            {
                let (gw, gb) = grad.params[off..off + i * o + o].split_at_mut(i * o);
                for ((row, gbias), &d) in gw.chunks_exact_mut(i).zip(gb.iter_mut()).zip(&delta) {
                    if d == T::zero() {
                        continue;
                    }
                    *gbias = *gbias + d;
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g = *g + d * x;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[off..off + i * o];
                let mut next = vec![T::zero(); i];
                for (row, &d) in w.chunks_exact(i).zip(&delta) {
                    if d == T::zero() {
                        continue;
                    }
                    for (n, &wv) in next.iter_mut().zip(row) {
                        *n = *n + d * wv;
                    }
                }
                delta = next;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_gradient_is_input() {
        // L = w·x with w = 2, x = 3
        let net = Mlp::from_parts(&[1, 1], vec![2.0f64, 0.0]).unwrap();
        let tape = net.forward_tape(&[3.0]).unwrap();
        assert_eq!(tape.output(), &[6.0]);
        let mut g = net.zeros_like();
        net.backward(&tape, &[1.0], &mut g);
        assert_eq!(g.params(), &[3.0, 1.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f64>::init(&[4, 5, 2], 1.0, &mut rng).unwrap();
        let tape = net.forward_tape(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut g = net.zeros_like();
        net.backward(&tape, &[0.0, 0.0], &mut g);
        assert!(g.params().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = orthogonal(3, 5, 1.0, &mut rng);
        for a in 0..3 {
            for b in 0..3 {
                let d: f64 = (0..5).map(|c| m[a * 5 + c] * m[b * 5 + c]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_sizes_and_inputs() {
        assert!(Mlp::<f64>::zeros(&[3]).is_err());
        assert!(Mlp::<f64>::zeros(&[3, 0, 1]).is_err());
        let net = Mlp::<f64>::zeros(&[3, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(Mlp::from_parts(&[2, 1], vec![0.0f64; 2]).is_err());
    }
}
