use rand_chacha::ChaCha8Rng;

use crate::autodiff::{attention, concat, Array, Tensor};
use crate::error::{Error, Result};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

use super::linear::Linear;

/// Multi-head attention projections.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: usize,
    pub d_model: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl AttentionParams {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::config(format!("d_model {d_model} not divisible by {heads} heads")));
        }
        Ok(Self {
            heads,
            d_model,
            q: Linear::new(store, rng, &format!("{name}.q"), d_model, d_model),
            // a key bias shifts every score of a row equally; softmax ignores it
            k: Linear::without_bias(store, rng, &format!("{name}.k"), d_model, d_model),
            v: Linear::new(store, rng, &format!("{name}.v"), d_model, d_model),
            out: Linear::new(store, rng, &format!("{name}.out"), d_model, d_model),
        })
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn param_count(d_model: usize) -> usize {
        4 * d_model * d_model + 3 * d_model
    }
}

/// Per-head scaled dot-product attention of `query` over `key_value`,
/// heads concatenated and output-projected.
pub fn multihead_attention<T: Scalar>(
    s: &Session<T>,
    p: &AttentionParams,
    query: &Tensor<T>,
    key_value: &Tensor<T>,
    causal: bool,
) -> Result<Tensor<T>> {
    let q = p.q.forward(s, query)?;
    let k = p.k.forward(s, key_value)?;
    let v = p.v.forward(s, key_value)?;
    let dk = p.d_k();
    let heads = (0..p.heads)
        .map(|h| {
            let r = h * dk..(h + 1) * dk;
            attention(&q.slice(2, r.clone())?, &k.slice(2, r.clone())?, &v.slice(2, r)?, causal)
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = if heads.len() == 1 {
        heads.into_iter().next().unwrap()
    } else {
        concat(&heads, 2)?
    };
    p.out.forward(s, &merged)
}

/// Attention weight matrices `[B, Tq, Tk]`, one per head, through the
/// explicit matmul/mask/softmax path.
pub fn attention_weights<T: Scalar>(
    s: &Session<T>,
    p: &AttentionParams,
    query: &Tensor<T>,
    key_value: &Tensor<T>,
    causal: bool,
) -> Result<Vec<Tensor<T>>> {
    let q = p.q.forward(s, query)?;
    let k = p.k.forward(s, key_value)?;
    let dk = p.d_k();
    let scale = T::lit(1.0 / (dk as f64).sqrt());
    (0..p.heads)
        .map(|h| {
            let r = h * dk..(h + 1) * dk;
            let scores = q.slice(2, r.clone())?.matmul(&k.slice(2, r)?.transpose()?)?.scale(scale);
            let scores = if causal { scores.causal_mask()? } else { scores };
            scores.softmax(2)
        })
        .collect()
}

/// Sinusoidal table `[T, d_model]`: `sin(t / 10000^(2i/d))` on even
/// channels, `cos` on odd ones.
pub fn positional_encoding<T: Scalar>(len: usize, d_model: usize) -> Result<Array<T>> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::config(format!("positional encoding needs an even d_model, got {d_model}")));
    }
    if len == 0 {
        return Err(Error::config("positional encoding needs T >= 1"));
    }
    let mut data = Vec::with_capacity(len * d_model);
    for t in 0..len {
        for c in 0..d_model {
            let i2 = (c - c % 2) as f64;
            let angle = t as f64 / 10000f64.powf(i2 / d_model as f64);
            data.push(T::lit(if c % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Array::new(vec![len, d_model], data)
}
