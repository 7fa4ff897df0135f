use crate::error::{Error, Result};
use crate::layers::{LstmParams, UnitKind, UnitParams};
use crate::scalar::Scalar;

use super::{ArchSpec, ExtractorKind, Network, SeparatedNetSpec, Topology};

/// Largest width tried by `match_capacity`.
const MAX_WIDTH: usize = 1024;

/// Tolerance on the relative parameter-count gap.
const CAPACITY_TOLERANCE: f64 = 0.10;

pub fn param_count<T: Scalar>(model: &dyn Network<T>) -> usize {
    model.params().count()
}

fn affine(d_in: usize, d_out: usize) -> usize {
    d_in * d_out + d_out
}

impl ArchSpec {
    /// Parameter count implied by the spec, without building it.
    pub fn expected_param_count(&self) -> Result<usize> {
        let head_in = |width: usize, taps: usize| match self.fusion.mode {
            crate::fusion::FusionMode::Concat => width * taps,
            _ => width,
        };
        Ok(match self.topology()? {
            Topology::Recurrent { widths, taps } => {
                let mut total = 0;
                let mut d_in = self.d_in;
                for &w in &widths {
                    total += LstmParams::param_count(d_in, w);
                    d_in = w;
                }
                let common = *widths.last().unwrap();
                for &j in &taps {
                    if widths[j - 1] != common {
                        total += affine(widths[j - 1], common);
                    }
                }
                total + affine(head_in(common, taps.len()), self.d_out)
            }
            Topology::Transformer {
                unit,
                encoders,
                decoders,
                encoder_taps,
                decoder_taps,
            } => {
                let d = self.d_model;
                let enc_kind = if unit == UnitKind::Ga { UnitKind::Ga } else { UnitKind::Encoder };
                affine(self.d_in, d)
                    + encoders * UnitParams::param_count(enc_kind, d, self.d_ff(), false)
                    + decoders * UnitParams::param_count(unit, d, self.d_ff(), true)
                    + affine(head_in(d, encoder_taps.len() + decoder_taps.len()), self.d_out)
            }
            Topology::Window { window, layers } => {
                let d = self.d_model;
                affine(window * self.d_in, d) + (layers - 1) * affine(d, d) + affine(head_in(d, 1), self.d_out)
            }
            Topology::Separated => {
                let s = SeparatedNetSpec::from_arch(self)?;
                let d = s.d_model;
                let trunk = match s.extractor {
                    ExtractorKind::Lstm => LstmParams::param_count(s.d_in, d) + (s.depth - 1) * LstmParams::param_count(d, d),
                    ExtractorKind::Transformer => {
                        affine(s.d_in, d) + s.depth * UnitParams::param_count(UnitKind::Encoder, d, s.d_ff, false)
                    }
                };
                trunk + (s.depth + 2) * affine(d, s.d_out)
            }
        })
    }

    pub(crate) fn with_width(&self, d_model: usize) -> ArchSpec {
        let mut s = self.clone();
        if let Some(ff) = self.d_ff {
            s.d_ff = Some((ff * d_model).div_ceil(self.d_model).max(1));
        }
        s.d_model = d_model;
        s.layer_widths = None;
        s
    }
}

/// Width for `b` whose parameter count is closest to that of `a`; a
/// configuration error when no width lands within 10%.
pub fn match_capacity(a: &ArchSpec, b: &ArchSpec) -> Result<usize> {
    let target = a.expected_param_count()? as f64;
    let mut best: Option<(usize, f64)> = None;
    for width in 1..=MAX_WIDTH {
        let Ok(count) = b.with_width(width).expected_param_count() else {
            continue;
        };
        let gap = (count as f64 - target).abs() / target;
        if best.map_or(true, |(_, g)| gap < g) {
            best = Some((width, gap));
        }
        if count as f64 > target * (1.0 + CAPACITY_TOLERANCE) {
            break;
        }
    }
    match best {
        Some((width, gap)) if gap <= CAPACITY_TOLERANCE => Ok(width),
        Some((width, gap)) => Err(Error::config(format!(
            "cannot match {} parameters with {}: closest width {width} is off by {:.1}%",
            target,
            b.kind,
            gap * 100.0
        ))),
        None => Err(Error::config(format!("no valid width for {}", b.kind))),
    }
}
