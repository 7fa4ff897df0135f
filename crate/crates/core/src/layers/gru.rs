use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, Tensor};
use crate::error::Result;
use crate::params::{Init, ParamId, ParamStore, Session};
use crate::scalar::Scalar;

use super::lstm::check_sequence;

/// GRU weights. Gate blocks are ordered reset, update, candidate.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub d_in: usize,
    pub d_h: usize,
}

impl GruParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_h: usize) -> Self {
        let bound = 1.0 / (d_h as f64).sqrt();
        Self {
            w_ih: store.add(format!("{name}.w_ih"), &[d_in, 3 * d_h], Init::Uniform(bound), rng),
            w_hh: store.add(format!("{name}.w_hh"), &[d_h, 3 * d_h], Init::Uniform(bound), rng),
            b_ih: store.add(format!("{name}.b_ih"), &[3 * d_h], Init::Uniform(bound), rng),
            b_hh: store.add(format!("{name}.b_hh"), &[3 * d_h], Init::Uniform(bound), rng),
            d_in,
            d_h,
        }
    }

    pub fn param_count(d_in: usize, d_h: usize) -> usize {
        3 * d_h * (d_in + d_h + 2)
    }
}

/// `h' = (1 - z)·n + z·h` with `n = tanh(x·W_n + b_in + r·(h·U_n + b_hn))`.
pub fn gru_layer<T: Scalar>(s: &Session<T>, p: &GruParams, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, t_len) = check_sequence("gru_layer", x, p.d_in)?;
    let dh = p.d_h;
    let xp = x.matmul(s.param(p.w_ih))?.add(&s.param(p.b_ih).expand(&[b, t_len])?)?;
    let b_hh = s.param(p.b_hh).expand(&[b])?;
    let w_hh = s.param(p.w_hh);
    let mut h = s.tape().zeros(&[b, dh])?;
    let mut outs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let xt = xp.slice(1, t..t + 1)?.reshape(&[b, 3 * dh])?;
        let hp = if t == 0 { b_hh.clone() } else { h.matmul(w_hh)?.add(&b_hh)? };
        let r = xt.slice(1, 0..dh)?.add(&hp.slice(1, 0..dh)?)?.sigmoid();
        let z = xt.slice(1, dh..2 * dh)?.add(&hp.slice(1, dh..2 * dh)?)?.sigmoid();
        let n = xt
            .slice(1, 2 * dh..3 * dh)?
            .add(&r.mul(&hp.slice(1, 2 * dh..3 * dh)?)?)?
            .tanh();
        h = n.add(&z.mul(&h.sub(&n)?)?)?;
        outs.push(h.reshape(&[b, 1, dh])?);
    }
    concat(&outs, 1)
}
