use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{mse, Array, Tensor};
use crate::error::{Error, Result};
use crate::fusion::{fusion_weights, weighted_stack, FeatureTap};
use crate::layers::{lstm_layer, Linear, LstmParams, UnitKind, UnitParams};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

use super::model::{check_input, embed_sequence};
use super::{check_finite, ArchKind, ArchSpec, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    #[default]
    Lstm,
    Transformer,
}

impl std::fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExtractorKind::Lstm => "lstm",
            ExtractorKind::Transformer => "transformer",
        })
    }
}

impl std::str::FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lstm" => Ok(ExtractorKind::Lstm),
            "transformer" | "tf" => Ok(ExtractorKind::Transformer),
            other => Err(Error::config(format!("unknown extractor `{other}` (lstm, transformer)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedNetSpec {
    pub extractor: ExtractorKind,
    pub depth: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Decay factor of the multi-level head.
    pub p: f64,
    pub seed: u64,
}

impl SeparatedNetSpec {
    pub fn from_arch(spec: &ArchSpec) -> Result<Self> {
        Ok(Self {
            extractor: spec.extractor,
            depth: spec.depth.unwrap_or(3),
            d_in: spec.d_in,
            d_out: spec.d_out,
            d_model: spec.d_model,
            heads: spec.heads,
            d_ff: spec.d_ff(),
            p: spec.fusion.p,
            seed: spec.seed,
        })
    }

    pub fn to_arch(&self) -> ArchSpec {
        let mut a = ArchSpec::new(ArchKind::Separated);
        a.extractor = self.extractor;
        a.depth = Some(self.depth);
        a.d_in = self.d_in;
        a.d_out = self.d_out;
        a.d_model = self.d_model;
        a.heads = self.heads;
        a.d_ff = Some(self.d_ff);
        a.fusion.p = self.p;
        a.seed = self.seed;
        a
    }
}

#[derive(Debug, Clone)]
enum Extractor {
    Lstm(Vec<LstmParams>),
    Transformer { embed: Linear, units: Vec<UnitParams> },
}

/// Feature extractor trained through its own final head, with per-depth
/// probe heads and a multi-level head reading gradient-stopped features.
#[derive(Debug, Clone)]
pub struct SeparatedNet<T> {
    spec: SeparatedNetSpec,
    arch: ArchSpec,
    store: ParamStore<T>,
    extractor: Extractor,
    live: Linear,
    probes: Vec<Linear>,
    multi: Linear,
    weights: Vec<T>,
}

pub struct SeparatedOutput<T> {
    pub live: Tensor<T>,
    /// Probe predictions, shallowest depth first.
    pub probes: Vec<Tensor<T>>,
    pub multi: Tensor<T>,
    /// Extractor features per depth, shallowest first, not detached.
    pub features: Vec<Tensor<T>>,
}

pub fn build_separated<T: Scalar>(spec: &SeparatedNetSpec) -> Result<SeparatedNet<T>> {
    if spec.depth < 2 {
        return Err(Error::config(format!("separated extractor depth {} < 2", spec.depth)));
    }
    if spec.d_in == 0 || spec.d_out == 0 || spec.d_model == 0 {
        return Err(Error::config("d_in, d_out and d_model must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut store = ParamStore::new();
    let d = spec.d_model;
    let extractor = match spec.extractor {
        ExtractorKind::Lstm => {
            let mut layers = Vec::with_capacity(spec.depth);
            let mut d_in = spec.d_in;
            for j in 0..spec.depth {
                layers.push(LstmParams::new(&mut store, &mut rng, &format!("lstm.{j}"), d_in, d));
                d_in = d;
            }
            Extractor::Lstm(layers)
        }
        ExtractorKind::Transformer => {
            if d % 2 != 0 {
                return Err(Error::config("transformer d_model must be even"));
            }
            let embed = Linear::new(&mut store, &mut rng, "embed", spec.d_in, d);
            let units = (0..spec.depth)
                .map(|j| UnitParams::new(&mut store, &mut rng, &format!("encoder.{j}"), UnitKind::Encoder, d, spec.heads, spec.d_ff, false))
                .collect::<Result<Vec<_>>>()?;
            Extractor::Transformer { embed, units }
        }
    };
    let live = Linear::new(&mut store, &mut rng, "head.live", d, spec.d_out);
    let probes = (1..=spec.depth)
        .map(|j| Linear::new(&mut store, &mut rng, &format!("head.probe.L{j}"), d, spec.d_out))
        .collect();
    let multi = Linear::new(&mut store, &mut rng, "head.multi", d, spec.d_out);
    let taps: Vec<FeatureTap> = (1..=spec.depth)
        .map(|j| FeatureTap::new(format!("probe.L{j}"), spec.depth - j))
        .collect();
    let weights = fusion_weights(&taps, T::lit(spec.p))?;
    Ok(SeparatedNet {
        spec: spec.clone(),
        arch: spec.to_arch(),
        store,
        extractor,
        live,
        probes,
        multi,
        weights,
    })
}

impl<T: Scalar> SeparatedNet<T> {
    pub fn separated_spec(&self) -> &SeparatedNetSpec {
        &self.spec
    }

    /// Multi-level weights, shallowest depth first.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    /// Parameters of the extractor trunk (excludes every head).
    pub fn is_extractor_param(&self, name: &str) -> bool {
        !name.starts_with("head.")
    }

    pub fn outputs(&self, s: &Session<T>, x: &Tensor<T>) -> Result<SeparatedOutput<T>> {
        check_input(x, self.spec.d_in)?;
        let mut features = Vec::with_capacity(self.spec.depth);
        match &self.extractor {
            Extractor::Lstm(layers) => {
                let mut h = x.clone();
                for (j, p) in layers.iter().enumerate() {
                    h = lstm_layer(s, p, &h)?;
                    check_finite(&h, &format!("lstm.L{}", j + 1))?;
                    features.push(h.clone());
                }
            }
            Extractor::Transformer { embed, units } => {
                let mut h = embed_sequence(s, embed, x)?;
                for (j, u) in units.iter().enumerate() {
                    h = u.forward(s, &h, None)?;
                    check_finite(&h, &format!("encoder.L{}", j + 1))?;
                    features.push(h.clone());
                }
            }
        }
        let live = self.live.forward(s, features.last().unwrap())?;
        let stopped: Vec<Tensor<T>> = features.iter().map(|f| f.detach()).collect();
        let probes = self
            .probes
            .iter()
            .zip(&stopped)
            .map(|(h, f)| h.forward(s, f))
            .collect::<Result<Vec<_>>>()?;
        let multi = self.multi.forward(s, &weighted_stack(&stopped, &self.weights)?)?;
        Ok(SeparatedOutput {
            live,
            probes,
            multi,
            features,
        })
    }

    pub fn run(&self, x: &Array<T>) -> Result<SeparatedOutput<T>> {
        let s = Session::new(&self.store, false);
        let x = x.to_tensor(s.tape(), false);
        self.outputs(&s, &x)
    }

    /// Unweighted sum of the live, probe and multi-level losses.
    pub fn total_loss(&self, out: &SeparatedOutput<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut total = mse(&out.live, y)?.add(&mse(&out.multi, y)?)?;
        for p in &out.probes {
            total = total.add(&mse(p, y)?)?;
        }
        Ok(total)
    }
}

impl<T: Scalar> Network<T> for SeparatedNet<T> {
    fn spec(&self) -> &ArchSpec {
        &self.arch
    }

    fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn predict(&self, s: &Session<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.outputs(s, x)?.live)
    }

    fn loss(&self, s: &Session<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.outputs(s, x)?;
        self.total_loss(&out, y)
    }
}
