//! Network builders: serial baselines, the LSTM-n / TF-n variant families,
//! pyramid networks and the separated probing network.

mod capacity;
mod checkpoint;
mod model;
mod separated;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{mse, Tensor};
use crate::error::{Error, Result};
use crate::fusion::{FeatureTap, FusionMode, DEFAULT_DECAY};
use crate::layers::UnitKind;
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

pub use capacity::{match_capacity, param_count};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use model::{build, ForwardOutput, Model};
pub use separated::{build_separated, ExtractorKind, SeparatedNet, SeparatedNetSpec, SeparatedOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArchKind {
    LstmBaseline,
    TransformerBaseline,
    MlpBaseline,
    /// LSTM-1 .. LSTM-4.
    LstmVariant(u8),
    /// TF-1 .. TF-5.
    TfVariant(u8),
    PyramidLstm,
    PyramidTransformer,
    PyramidGa,
    Separated,
}

impl ArchKind {
    pub const COMPARISON: [ArchKind; 6] = [
        ArchKind::LstmBaseline,
        ArchKind::TransformerBaseline,
        ArchKind::MlpBaseline,
        ArchKind::PyramidLstm,
        ArchKind::PyramidTransformer,
        ArchKind::PyramidGa,
    ];

    pub fn is_pyramid(self) -> bool {
        matches!(self, ArchKind::PyramidLstm | ArchKind::PyramidTransformer | ArchKind::PyramidGa)
    }

    /// Serial network sharing the base layer type, if any.
    pub fn serial_counterpart(self) -> Option<ArchKind> {
        match self {
            ArchKind::PyramidLstm => Some(ArchKind::LstmBaseline),
            ArchKind::PyramidTransformer => Some(ArchKind::TransformerBaseline),
            _ => None,
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArchKind::LstmBaseline => f.write_str("lstm_baseline"),
            ArchKind::TransformerBaseline => f.write_str("transformer_baseline"),
            ArchKind::MlpBaseline => f.write_str("mlp_baseline"),
            ArchKind::LstmVariant(i) => write!(f, "lstm-{i}"),
            ArchKind::TfVariant(i) => write!(f, "tf-{i}"),
            ArchKind::PyramidLstm => f.write_str("pyramid_lstm"),
            ArchKind::PyramidTransformer => f.write_str("pyramid_transformer"),
            ArchKind::PyramidGa => f.write_str("pyramid_ga"),
            ArchKind::Separated => f.write_str("separated"),
        }
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let variant = |prefix: &str, max: u8| -> Option<u8> {
            let rest = norm.strip_prefix(prefix)?;
            let rest = rest.strip_prefix('-').unwrap_or(rest);
            rest.parse::<u8>().ok().filter(|i| (1..=max).contains(i))
        };
        let kind = match norm.as_str() {
            "lstm" | "lstm-baseline" => ArchKind::LstmBaseline,
            "transformer" | "transformer-baseline" | "tf" => ArchKind::TransformerBaseline,
            "mlp" | "mlp-baseline" => ArchKind::MlpBaseline,
            "pyramid-lstm" => ArchKind::PyramidLstm,
            "pyramid-transformer" => ArchKind::PyramidTransformer,
            "pyramid-ga" | "ga" => ArchKind::PyramidGa,
            "separated" => ArchKind::Separated,
            _ => {
                if let Some(i) = variant("lstm", 4) {
                    ArchKind::LstmVariant(i)
                } else if let Some(i) = variant("tf", 5).or_else(|| variant("transformer", 5)) {
                    ArchKind::TfVariant(i)
                } else {
                    return Err(Error::config(format!("unknown architecture kind `{s}`")));
                }
            }
        };
        Ok(kind)
    }
}

impl Serialize for ArchKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArchKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub p: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::WeightedStacked,
            p: DEFAULT_DECAY,
        }
    }
}

/// Declarative architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub d_in: usize,
    pub d_out: usize,
    pub d_model: usize,
    pub heads: usize,
    /// Feed-forward width; `2 * d_model` when absent.
    pub d_ff: Option<usize>,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Recurrent depth for LSTM stacks and the separated extractor.
    pub depth: Option<usize>,
    /// Per-layer hidden widths of a recurrent stack, overriding `d_model`.
    pub layer_widths: Option<Vec<usize>>,
    pub mlp_window: usize,
    pub mlp_layers: usize,
    pub extractor: ExtractorKind,
    pub fusion: FusionConfig,
    pub seed: u64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            kind: ArchKind::PyramidLstm,
            d_in: 1,
            d_out: 1,
            d_model: 16,
            heads: 2,
            d_ff: None,
            encoder_layers: 2,
            decoder_layers: 4,
            depth: None,
            layer_widths: None,
            mlp_window: 16,
            mlp_layers: 2,
            extractor: ExtractorKind::Lstm,
            fusion: FusionConfig::default(),
            seed: 0,
        }
    }
}

/// Resolved layer layout and tap set.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Topology {
    Recurrent {
        widths: Vec<usize>,
        /// 1-based tapped layers, ascending; always ends with the last.
        taps: Vec<usize>,
    },
    Transformer {
        unit: UnitKind,
        encoders: usize,
        decoders: usize,
        encoder_taps: Vec<usize>,
        decoder_taps: Vec<usize>,
    },
    Window {
        window: usize,
        layers: usize,
    },
    Separated,
}

impl ArchSpec {
    pub fn new(kind: ArchKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn d_ff(&self) -> usize {
        self.d_ff.unwrap_or(2 * self.d_model)
    }

    fn recurrent_depth(&self, fixed: Option<usize>, default: usize) -> Result<usize> {
        match (fixed, self.depth) {
            (Some(f), Some(d)) if d != f => Err(Error::config(format!(
                "{} has a fixed depth of {f}, got depth {d}",
                self.kind
            ))),
            (Some(f), _) => Ok(f),
            (None, Some(0)) => Err(Error::config("recurrent depth must be positive")),
            (None, Some(d)) => Ok(d),
            (None, None) => Ok(default),
        }
    }

    pub(crate) fn topology(&self) -> Result<Topology> {
        if self.d_in == 0 || self.d_out == 0 || self.d_model == 0 {
            return Err(Error::config("d_in, d_out and d_model must be positive"));
        }
        let recurrent = |depth: usize, taps: Vec<usize>| -> Result<Topology> {
            let widths = match &self.layer_widths {
                Some(w) if w.len() != depth => {
                    return Err(Error::config(format!("{} layer widths given for depth {depth}", w.len())))
                }
                Some(w) if w.contains(&0) => return Err(Error::config("layer widths must be positive")),
                Some(w) => w.clone(),
                None => vec![self.d_model; depth],
            };
            Ok(Topology::Recurrent { widths, taps })
        };
        let transformer = |unit: UnitKind, enc: Vec<usize>, dec: Vec<usize>| -> Result<Topology> {
            if self.heads == 0 || self.d_model % self.heads != 0 {
                return Err(Error::config(format!(
                    "d_model {} not divisible by {} heads",
                    self.d_model, self.heads
                )));
            }
            if self.d_model % 2 != 0 {
                return Err(Error::config("transformer d_model must be even"));
            }
            if self.encoder_layers == 0 || self.decoder_layers == 0 || self.d_ff() == 0 {
                return Err(Error::config("transformer needs encoder and decoder units"));
            }
            let enc_ok = enc.iter().all(|&i| i <= self.encoder_layers);
            let dec_ok = dec.iter().all(|&i| i <= self.decoder_layers);
            if !enc_ok || !dec_ok {
                return Err(Error::config(format!(
                    "{} taps need {} encoder and {} decoder units",
                    self.kind,
                    enc.iter().max().unwrap_or(&0),
                    dec.iter().max().unwrap_or(&0)
                )));
            }
            let mut decoder_taps = dec;
            if !decoder_taps.contains(&self.decoder_layers) {
                decoder_taps.push(self.decoder_layers);
            }
            Ok(Topology::Transformer {
                unit,
                encoders: self.encoder_layers,
                decoders: self.decoder_layers,
                encoder_taps: enc,
                decoder_taps,
            })
        };
        let all = |n: usize| (1..=n).collect::<Vec<_>>();
        match self.kind {
            ArchKind::LstmBaseline => {
                let d = self.recurrent_depth(None, 2)?;
                recurrent(d, vec![d])
            }
            ArchKind::PyramidLstm => {
                let d = self.recurrent_depth(None, 2)?;
                recurrent(d, all(d))
            }
            ArchKind::LstmVariant(i) => {
                let (depth, taps) = match i {
                    1 => (1, vec![1]),
                    2 => (2, vec![1, 2]),
                    3 => (3, vec![1, 2, 3]),
                    4 => (3, vec![2, 3]),
                    _ => return Err(Error::config(format!("no LSTM variant {i}"))),
                };
                recurrent(self.recurrent_depth(Some(depth), depth)?, taps)
            }
            ArchKind::TransformerBaseline => transformer(UnitKind::Decoder, vec![], vec![self.decoder_layers]),
            ArchKind::TfVariant(i) => {
                let (enc, dec) = match i {
                    1 => (vec![], vec![3, 4]),
                    2 => (vec![], vec![2, 4]),
                    3 => (vec![], vec![2, 3, 4]),
                    4 => (vec![], vec![1, 2, 3, 4]),
                    5 => (vec![1, 2], vec![1, 2, 3, 4]),
                    _ => return Err(Error::config(format!("no TF variant {i}"))),
                };
                transformer(UnitKind::Decoder, enc, dec)
            }
            ArchKind::PyramidTransformer => {
                transformer(UnitKind::Decoder, all(self.encoder_layers), all(self.decoder_layers))
            }
            ArchKind::PyramidGa => transformer(UnitKind::Ga, all(self.encoder_layers), all(self.decoder_layers)),
            ArchKind::MlpBaseline => {
                if self.mlp_window == 0 || self.mlp_layers == 0 {
                    return Err(Error::config("MLP window and layer count must be positive"));
                }
                Ok(Topology::Window {
                    window: self.mlp_window,
                    layers: self.mlp_layers,
                })
            }
            ArchKind::Separated => Ok(Topology::Separated),
        }
    }

    /// Fusion taps ordered from the output layer backwards.
    pub fn taps(&self) -> Result<Vec<FeatureTap>> {
        Ok(match self.topology()? {
            Topology::Recurrent { widths, taps } => {
                let depth = widths.len();
                taps.iter()
                    .rev()
                    .map(|&j| FeatureTap {
                        id: format!("lstm.L{j}"),
                        source: format!("lstm.{}", j - 1),
                        level: depth - j,
                    })
                    .collect()
            }
            Topology::Transformer {
                encoders,
                decoders,
                encoder_taps,
                decoder_taps,
                ..
            } => {
                let dec = decoder_taps.iter().rev().map(|&j| FeatureTap {
                    id: format!("decoder.L{j}"),
                    source: format!("decoder.{}", j - 1),
                    level: decoders - j,
                });
                let enc = encoder_taps.iter().rev().map(|&j| FeatureTap {
                    id: format!("encoder.L{j}"),
                    source: format!("encoder.{}", j - 1),
                    level: decoders + encoders - j,
                });
                dec.chain(enc).collect()
            }
            Topology::Window { layers, .. } => vec![FeatureTap {
                id: format!("mlp.L{layers}"),
                source: format!("mlp.{}", layers - 1),
                level: 0,
            }],
            Topology::Separated => {
                let depth = SeparatedNetSpec::from_arch(self)?.depth;
                (1..=depth)
                    .rev()
                    .map(|j| FeatureTap::new(format!("probe.L{j}"), depth - j))
                    .collect()
            }
        })
    }
}

/// Anything the training loop can fit.
pub trait Network<T: Scalar> {
    fn spec(&self) -> &ArchSpec;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    /// Prediction `[B, T, d_out]` used for evaluation.
    fn predict(&self, s: &Session<T>, x: &Tensor<T>) -> Result<Tensor<T>>;
    /// Training objective; MSE of the prediction unless overridden.
    fn loss(&self, s: &Session<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        mse(&self.predict(s, x)?, y)
    }
}

/// Builds any kind, including the separated network.
pub fn build_network<T: Scalar>(spec: &ArchSpec) -> Result<Box<dyn Network<T>>> {
    Ok(match spec.kind {
        ArchKind::Separated => Box::new(build_separated::<T>(&SeparatedNetSpec::from_arch(spec)?)?),
        _ => Box::new(build::<T>(spec)?),
    })
}

pub(crate) fn check_finite<T: Scalar>(t: &Tensor<T>, layer: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite values produced by {layer}")))
    }
}

#[cfg(test)]
mod tests;
