use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dataset::{Dataset, Split};

/// Per-channel extremes of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ChannelRange {
    /// Extremes over row-major `[.., channels]` data. `offset` numbers the
    /// channels in degenerate-range errors.
    pub fn fit(data: &[f64], channels: usize, offset: usize) -> Result<Self> {
        if channels == 0 || data.is_empty() || data.len() % channels != 0 {
            return Err(Error::contract("cannot fit a range on empty or ragged data"));
        }
        let mut min = vec![f64::INFINITY; channels];
        let mut max = vec![f64::NEG_INFINITY; channels];
        for row in data.chunks_exact(channels) {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        for c in 0..channels {
            if !(max[c] > min[c]) {
                return Err(Error::DegenerateRange {
                    channel: offset + c,
                    value: min[c],
                });
            }
        }
        Ok(Self { min, max })
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    /// `2·(x − min)/(max − min) − 1`, in place, unclipped.
    pub fn normalize(&self, data: &mut [f64]) {
        let c = self.channels();
        for row in data.chunks_exact_mut(c) {
            for (i, v) in row.iter_mut().enumerate() {
                *v = 2.0 * (*v - self.min[i]) / (self.max[i] - self.min[i]) - 1.0;
            }
        }
    }

    pub fn denormalize(&self, data: &[f64]) -> Vec<f64> {
        let c = self.channels();
        let mut out = data.to_vec();
        for row in out.chunks_exact_mut(c) {
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v + 1.0) * 0.5 * (self.max[i] - self.min[i]) + self.min[i];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub input: ChannelRange,
    pub output: ChannelRange,
}

/// Maps a raw dataset to `[-1, 1]` using statistics of its training split.
pub fn minmax_normalize(raw: Dataset) -> Result<(Dataset, NormalizationRecord)> {
    if raw.normalization.is_some() {
        return Err(Error::contract("dataset is already normalized"));
    }
    let record = NormalizationRecord {
        input: ChannelRange::fit(&raw.train.inputs.data, raw.input_channels(), 0)?,
        output: ChannelRange::fit(&raw.train.outputs.data, raw.output_channels(), raw.input_channels())?,
    };
    let apply = |mut s: Split| {
        record.input.normalize(&mut s.inputs.data);
        record.output.normalize(&mut s.outputs.data);
        s
    };
    let ds = Dataset {
        train: apply(raw.train),
        valid: apply(raw.valid),
        test: apply(raw.test),
        normalization: Some(record.clone()),
        ..raw
    };
    Ok((ds, record))
}

/// Inverse map of one side (inputs or outputs) back to physical units.
pub fn denormalize(range: &ChannelRange, series: &[f64]) -> Vec<f64> {
    range.denormalize(series)
}
