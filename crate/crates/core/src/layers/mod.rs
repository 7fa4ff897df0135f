//! Recurrent and attention building blocks.

mod attention;
mod gru;
mod linear;
mod lstm;
mod unit;

pub use attention::{attention_weights, multihead_attention, positional_encoding, AttentionParams};
pub use gru::{gru_layer, GruParams};
pub use linear::{FeedForward, LayerNorm, Linear};
pub use lstm::{lstm_layer, lstm_layer_with_state, LstmParams, LstmState};
pub use unit::{decoder_unit, encoder_unit, ga_unit, UnitKind, UnitParams};
