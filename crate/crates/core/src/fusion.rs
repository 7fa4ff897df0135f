//! Level-weighted fusion of multi-level features.
//!
//! A feature tapped `k` modules before the output layer gets raw weight
//! `1 / p^k` (`p >= 1`); the fused feature is the weighted sum divided by
//! the sum of weights. `p = 1` recovers plain averaging; large `p`
//! concentrates all weight on the deepest tap. The three classic
//! level-agnostic fusions (equal average, elementwise sum, concatenation)
//! are provided as baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{concat, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default weight decay factor.
pub const DEFAULT_DECAY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    WeightedStacked,
    EqualAverage,
    ElementwiseSum,
    Concat,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::WeightedStacked => "weighted_stacked",
            FusionMode::EqualAverage => "equal_average",
            FusionMode::ElementwiseSum => "elementwise_sum",
            FusionMode::Concat => "concat",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "weighted_stacked" | "weighted" => Ok(FusionMode::WeightedStacked),
            "equal_average" | "average" => Ok(FusionMode::EqualAverage),
            "elementwise_sum" | "sum" => Ok(FusionMode::ElementwiseSum),
            "concat" => Ok(FusionMode::Concat),
            other => Err(Error::config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

/// A feature routed to the output module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTap {
    pub id: String,
    /// Layer or unit producing the feature.
    pub source: String,
    /// Number of modules between the tap and the output layer.
    pub level: usize,
}

impl FeatureTap {
    pub fn new(id: impl Into<String>, level: usize) -> Self {
        let id = id.into();
        Self {
            source: id.clone(),
            id,
            level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub mode: FusionMode,
    /// Weight decay factor, `>= 1`.
    pub p: f64,
    pub taps: Vec<FeatureTap>,
    pub common_width: usize,
}

impl FusionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) {
            return Err(Error::config(format!("weight decay factor p = {} must be >= 1.0", self.p)));
        }
        if self.taps.is_empty() {
            return Err(Error::config("fusion needs at least one tap"));
        }
        for (i, t) in self.taps.iter().enumerate() {
            if self.taps[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::config(format!("duplicate tap id `{}`", t.id)));
            }
        }
        if self.common_width == 0 {
            return Err(Error::config("fusion width must be positive"));
        }
        Ok(())
    }

    /// Width of the fused feature.
    pub fn output_width(&self) -> usize {
        match self.mode {
            FusionMode::Concat => self.common_width * self.taps.len(),
            _ => self.common_width,
        }
    }

    /// Per-tap weights applied by `fuse` in this mode.
    pub fn weights<T: Scalar>(&self) -> Result<Vec<T>> {
        match self.mode {
            FusionMode::WeightedStacked => fusion_weights(&self.taps, T::lit(self.p)),
            FusionMode::EqualAverage => fusion_weights(&self.taps, T::one()),
            FusionMode::ElementwiseSum | FusionMode::Concat => Ok(vec![T::one(); self.taps.len()]),
        }
    }
}

/// Fused feature together with the weights that produced it.
#[derive(Clone)]
pub struct FusedFeature<T> {
    pub tensor: Tensor<T>,
    pub weights: Vec<T>,
}

/// Normalised level weights: `p^-k_i / Σ_j p^-k_j`.
pub fn fusion_weights<T: Scalar>(taps: &[FeatureTap], p: T) -> Result<Vec<T>> {
    if !(p >= T::one()) {
        return Err(Error::config(format!("weight decay factor p = {p} must be >= 1.0")));
    }
    if taps.is_empty() {
        return Err(Error::config("fusion needs at least one tap"));
    }
    let raw: Vec<T> = taps
        .iter()
        .map(|t| T::one() / p.powi(t.level as i32))
        .collect();
    let total: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `Σ w_i · f_i` over equally shaped features. Weights are used as given.
pub fn weighted_stack<T: Scalar>(features: &[Tensor<T>], weights: &[T]) -> Result<Tensor<T>> {
    if features.len() != weights.len() {
        return Err(Error::contract(format!(
            "{} features but {} weights",
            features.len(),
            weights.len()
        )));
    }
    let first = features
        .first()
        .ok_or_else(|| Error::contract("weighted_stack needs at least one feature"))?;
    let shape = first.shape();
    let mut acc: Option<Tensor<T>> = None;
    for (f, &w) in features.iter().zip(weights) {
        if f.shape() != shape {
            return Err(Error::Dimension {
                op: "weighted_stack",
                lhs: shape,
                rhs: f.shape(),
            });
        }
        let term = f.scale(w);
        acc = Some(match acc {
            Some(a) => a.add(&term)?,
            None => term,
        });
    }
    Ok(acc.unwrap())
}

/// Fuses the features named by `spec.taps`. `features` may hold extra
/// entries; they are ignored.
pub fn fuse<T: Scalar>(spec: &FusionSpec, features: &[(String, Tensor<T>)]) -> Result<FusedFeature<T>> {
    spec.validate()?;
    let picked = spec
        .taps
        .iter()
        .map(|tap| {
            features
                .iter()
                .find(|(name, _)| *name == tap.id)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::contract(format!("feature for tap `{}` not provided", tap.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    for f in &picked {
        let w = *f.shape().last().unwrap();
        if w != spec.common_width {
            return Err(Error::Dimension {
                op: "fuse",
                lhs: f.shape(),
                rhs: vec![spec.common_width],
            });
        }
    }
    let weights = spec.weights::<T>()?;
    let tensor = match spec.mode {
        FusionMode::Concat => {
            let axis = picked[0].shape().len() - 1;
            if picked.len() == 1 {
                picked[0].clone()
            } else {
                concat(&picked, axis)?
            }
        }
        _ => weighted_stack(&picked, &weights)?,
    };
    Ok(FusedFeature { tensor, weights })
}
