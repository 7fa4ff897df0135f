use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

use super::attention::{multihead_attention, AttentionParams};
use super::gru::{gru_layer, GruParams};
use super::linear::{FeedForward, LayerNorm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Encoder,
    Decoder,
    /// Transformer unit with an extra GRU sublayer.
    Ga,
}

/// Sublayer wrapped as `LayerNorm(x + f(x))`.
#[derive(Debug, Clone)]
struct Residual<P> {
    inner: P,
    norm: LayerNorm,
}

/// One Transformer-style unit. All sublayers are causal and post-norm:
/// self-attention, then cross-attention (when built with memory), then the
/// GRU sublayer (GA units), then the feed-forward sublayer.
#[derive(Debug, Clone)]
pub struct UnitParams {
    pub kind: UnitKind,
    pub d_model: usize,
    self_attn: Residual<AttentionParams>,
    cross_attn: Option<Residual<AttentionParams>>,
    gru: Option<Residual<GruParams>>,
    ffn: Residual<FeedForward>,
}

impl UnitParams {
    /// `with_memory` adds a cross-attention sublayer; decoder units always
    /// have one, encoder units never do.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        kind: UnitKind,
        d_model: usize,
        heads: usize,
        d_ff: usize,
        with_memory: bool,
    ) -> Result<Self> {
        let with_memory = match kind {
            UnitKind::Encoder => false,
            UnitKind::Decoder => true,
            UnitKind::Ga => with_memory,
        };
        let self_attn = Residual {
            inner: AttentionParams::new(store, rng, &format!("{name}.self_attn"), d_model, heads)?,
            norm: LayerNorm::new(store, rng, &format!("{name}.norm_self"), d_model),
        };
        let cross_attn = if with_memory {
            Some(Residual {
                inner: AttentionParams::new(store, rng, &format!("{name}.cross_attn"), d_model, heads)?,
                norm: LayerNorm::new(store, rng, &format!("{name}.norm_cross"), d_model),
            })
        } else {
            None
        };
        let gru = if kind == UnitKind::Ga {
            Some(Residual {
                inner: GruParams::new(store, rng, &format!("{name}.gru"), d_model, d_model),
                norm: LayerNorm::new(store, rng, &format!("{name}.norm_gru"), d_model),
            })
        } else {
            None
        };
        let ffn = Residual {
            inner: FeedForward::new(store, rng, &format!("{name}.ffn"), d_model, d_ff),
            norm: LayerNorm::new(store, rng, &format!("{name}.norm_ffn"), d_model),
        };
        Ok(Self {
            kind,
            d_model,
            self_attn,
            cross_attn,
            gru,
            ffn,
        })
    }

    pub fn needs_memory(&self) -> bool {
        self.cross_attn.is_some()
    }

    pub fn param_count(kind: UnitKind, d_model: usize, d_ff: usize, with_memory: bool) -> usize {
        let ln = 2 * d_model;
        let attn = AttentionParams::param_count(d_model) + ln;
        let ffn = d_model * d_ff + d_ff + d_ff * d_model + d_model + ln;
        let cross = matches!(kind, UnitKind::Decoder) || (kind == UnitKind::Ga && with_memory);
        let gru = if kind == UnitKind::Ga {
            GruParams::param_count(d_model, d_model) + ln
        } else {
            0
        };
        attn + if cross { attn } else { 0 } + gru + ffn
    }

    pub fn forward<T: Scalar>(&self, s: &Session<T>, x: &Tensor<T>, memory: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let shape = x.shape();
        if shape.len() != 3 || shape[2] != self.d_model {
            return Err(Error::Dimension {
                op: "unit",
                lhs: shape,
                rhs: vec![0, 0, self.d_model],
            });
        }
        let a = multihead_attention(s, &self.self_attn.inner, x, x, true)?;
        let mut h = self.self_attn.norm.forward(s, &x.add(&a)?)?;
        if let Some(cross) = &self.cross_attn {
            let mem = memory.ok_or_else(|| Error::contract(format!("{:?} unit requires encoder memory", self.kind)))?;
            if mem.shape() != h.shape() {
                return Err(Error::Dimension {
                    op: "cross_attention",
                    lhs: h.shape(),
                    rhs: mem.shape(),
                });
            }
            let a = multihead_attention(s, &cross.inner, &h, mem, true)?;
            h = cross.norm.forward(s, &h.add(&a)?)?;
        }
        if let Some(gru) = &self.gru {
            let r = gru_layer(s, &gru.inner, &h)?;
            h = gru.norm.forward(s, &h.add(&r)?)?;
        }
        let f = self.ffn.inner.forward(s, &h)?;
        self.ffn.norm.forward(s, &h.add(&f)?)
    }
}

/// Encoder unit: self-attention and feed-forward.
pub fn encoder_unit<T: Scalar>(s: &Session<T>, p: &UnitParams, x: &Tensor<T>) -> Result<Tensor<T>> {
    p.forward(s, x, None)
}

/// Decoder unit: self-attention, cross-attention over `memory`, feed-forward.
pub fn decoder_unit<T: Scalar>(s: &Session<T>, p: &UnitParams, x: &Tensor<T>, memory: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    p.forward(s, x, memory)
}

pub fn ga_unit<T: Scalar>(s: &Session<T>, p: &UnitParams, x: &Tensor<T>, memory: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    p.forward(s, x, memory)
}
