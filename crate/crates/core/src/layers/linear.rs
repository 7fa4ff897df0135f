use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, Session};
use crate::scalar::Scalar;

/// Affine map on the last axis: `x·W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            &[d_in, d_out],
            Init::Xavier {
                fan_in: d_in,
                fan_out: d_out,
            },
            rng,
        );
        let bias = Some(store.add(format!("{name}.bias"), &[d_out], Init::Zeros, rng));
        Self {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    /// Linear map without the shift term.
    pub fn without_bias<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            &[d_in, d_out],
            Init::Xavier {
                fan_in: d_in,
                fan_out: d_out,
            },
            rng,
        );
        Self {
            weight,
            bias: None,
            d_in,
            d_out,
        }
    }

    pub fn forward<T: Scalar>(&self, s: &Session<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = x.shape();
        if shape.len() < 2 || *shape.last().unwrap() != self.d_in {
            return Err(Error::Dimension {
                op: "linear",
                lhs: shape,
                rhs: vec![self.d_in, self.d_out],
            });
        }
        let y = x.matmul(s.param(self.weight))?;
        match self.bias {
            Some(bias) => y.add(&s.param(bias).expand(&shape[..shape.len() - 1])?),
            None => Ok(y),
        }
    }
}

/// Layer normalisation over the last axis followed by a learned
/// per-channel scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), &[d], Init::Ones, rng),
            beta: store.add(format!("{name}.beta"), &[d], Init::Zeros, rng),
            eps: 1e-5,
        }
    }

    pub fn forward<T: Scalar>(&self, s: &Session<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = x.shape();
        let lead = &shape[..shape.len() - 1];
        let g = s.param(self.gamma).expand(lead)?;
        let b = s.param(self.beta).expand(lead)?;
        x.layer_norm(T::lit(self.eps))?.mul(&g)?.add(&b)
    }
}

/// Position-wise two-layer ReLU network.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_model: usize, d_ff: usize) -> Self {
        Self {
            inner: Linear::new(store, rng, &format!("{name}.ff1"), d_model, d_ff),
            outer: Linear::new(store, rng, &format!("{name}.ff2"), d_ff, d_model),
        }
    }

    pub fn forward<T: Scalar>(&self, s: &Session<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.inner.forward(s, x)?.relu();
        self.outer.forward(s, &h)
    }
}
