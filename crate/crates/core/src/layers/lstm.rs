use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore, Session};
use crate::scalar::Scalar;

/// LSTM weights. Gate blocks along the last axis are ordered
/// input, forget, cell candidate, output.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_h: usize,
}

impl LstmParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_h: usize) -> Self {
        let bound = 1.0 / (d_h as f64).sqrt();
        Self {
            w_ih: store.add(format!("{name}.w_ih"), &[d_in, 4 * d_h], Init::Uniform(bound), rng),
            w_hh: store.add(format!("{name}.w_hh"), &[d_h, 4 * d_h], Init::Uniform(bound), rng),
            bias: store.add(format!("{name}.bias"), &[4 * d_h], Init::Uniform(bound), rng),
            d_in,
            d_h,
        }
    }

    pub fn param_count(d_in: usize, d_h: usize) -> usize {
        4 * d_h * (d_in + d_h + 1)
    }
}

/// Final recurrent state. `c` is a constant and carries no gradient.
pub struct LstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

pub(crate) fn check_sequence<T: Scalar>(op: &'static str, x: &Tensor<T>, d_in: usize) -> Result<(usize, usize)> {
    let shape = x.shape();
    if shape.len() != 3 || shape[2] != d_in {
        return Err(Error::Dimension {
            op,
            lhs: shape,
            rhs: vec![0, 0, d_in],
        });
    }
    Ok((shape[0], shape[1]))
}

/// Runs the layer over `x: [B, T, d_in]` from zero state and returns the
/// hidden sequence `[B, T, d_h]`.
pub fn lstm_layer<T: Scalar>(s: &Session<T>, p: &LstmParams, x: &Tensor<T>) -> Result<Tensor<T>> {
    lstm_layer_with_state(s, p, x).map(|(seq, _)| seq)
}

pub fn lstm_layer_with_state<T: Scalar>(s: &Session<T>, p: &LstmParams, x: &Tensor<T>) -> Result<(Tensor<T>, LstmState<T>)> {
    let (b, t_len) = check_sequence("lstm_layer", x, p.d_in)?;
    if t_len == 0 {
        return Err(Error::shape("lstm_layer", "empty sequence"));
    }
    let bias = s.param(p.bias).expand(&[b, t_len])?;
    let xp = x.matmul(s.param(p.w_ih))?.add(&bias)?;
    let (seq, c_last) = xp.lstm_recurrence(s.param(p.w_hh))?;
    let h = seq.slice(1, t_len - 1..t_len)?.reshape(&[b, p.d_h])?;
    let c = s.tape().constant(&[b, p.d_h], c_last)?;
    Ok((seq, LstmState { h, c }))
}
