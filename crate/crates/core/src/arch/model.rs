use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, Array, Tensor};
use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionSpec};
use crate::layers::{lstm_layer, positional_encoding, Linear, LstmParams, UnitKind, UnitParams};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

use super::{check_finite, ArchKind, ArchSpec, Network, Topology};

#[derive(Debug, Clone)]
enum Body {
    Recurrent(Vec<LstmParams>),
    Transformer {
        embed: Linear,
        encoders: Vec<UnitParams>,
        decoders: Vec<UnitParams>,
    },
    Window {
        window: usize,
        layers: Vec<Linear>,
    },
}

/// An instantiated architecture: parameters plus a forward function.
#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ArchSpec,
    store: ParamStore<T>,
    body: Body,
    fusion: FusionSpec,
    /// Per tap, a projection to the common width when widths differ.
    projections: Vec<Option<Linear>>,
    head: Linear,
}

pub struct ForwardOutput<T> {
    pub y: Tensor<T>,
    /// Tapped features by tap id, before any width projection.
    pub taps: IndexMap<String, Tensor<T>>,
}

pub fn build<T: Scalar>(spec: &ArchSpec) -> Result<Model<T>> {
    if spec.kind == ArchKind::Separated {
        return Err(Error::config("the separated network is built with build_separated"));
    }
    let topology = spec.topology()?;
    let taps = spec.taps()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut store = ParamStore::new();
    let (body, tap_widths, common_width) = match topology {
        Topology::Recurrent { widths, .. } => {
            let mut layers = Vec::with_capacity(widths.len());
            let mut d_in = spec.d_in;
            for (j, &w) in widths.iter().enumerate() {
                layers.push(LstmParams::new(&mut store, &mut rng, &format!("lstm.{j}"), d_in, w));
                d_in = w;
            }
            let tap_widths = taps
                .iter()
                .map(|t| widths[widths.len() - 1 - t.level])
                .collect::<Vec<_>>();
            (Body::Recurrent(layers), tap_widths, d_in)
        }
        Topology::Transformer {
            unit,
            encoders,
            decoders,
            ..
        } => {
            let d = spec.d_model;
            let embed = Linear::new(&mut store, &mut rng, "embed", spec.d_in, d);
            let enc_kind = if unit == UnitKind::Ga { UnitKind::Ga } else { UnitKind::Encoder };
            let encoders = (0..encoders)
                .map(|j| UnitParams::new(&mut store, &mut rng, &format!("encoder.{j}"), enc_kind, d, spec.heads, spec.d_ff(), false))
                .collect::<Result<Vec<_>>>()?;
            let decoders = (0..decoders)
                .map(|j| UnitParams::new(&mut store, &mut rng, &format!("decoder.{j}"), unit, d, spec.heads, spec.d_ff(), true))
                .collect::<Result<Vec<_>>>()?;
            (
                Body::Transformer {
                    embed,
                    encoders,
                    decoders,
                },
                vec![d; taps.len()],
                d,
            )
        }
        Topology::Window { window, layers } => {
            let mut hidden = Vec::with_capacity(layers);
            let mut d_in = window * spec.d_in;
            for j in 0..layers {
                hidden.push(Linear::new(&mut store, &mut rng, &format!("mlp.{j}"), d_in, spec.d_model));
                d_in = spec.d_model;
            }
            (Body::Window { window, layers: hidden }, vec![spec.d_model], spec.d_model)
        }
        Topology::Separated => unreachable!(),
    };
    let projections = taps
        .iter()
        .zip(&tap_widths)
        .map(|(t, &w)| {
            (w != common_width).then(|| Linear::new(&mut store, &mut rng, &format!("project.{}", t.id), w, common_width))
        })
        .collect();
    let fusion = FusionSpec {
        mode: spec.fusion.mode,
        p: spec.fusion.p,
        taps,
        common_width,
    };
    fusion.validate()?;
    let head = Linear::new(&mut store, &mut rng, "head", fusion.output_width(), spec.d_out);
    Ok(Model {
        spec: spec.clone(),
        store,
        body,
        fusion,
        projections,
        head,
    })
}

/// Row `t` holds `x[t-w+1..=t]` flattened, oldest first, zero padded.
fn history_window<T: Scalar>(x: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
    let shape = x.shape();
    let (b, t, c) = (shape[0], shape[1], shape[2]);
    let tape = x.tape();
    let mut lags = Vec::with_capacity(window);
    for lag in (0..window).rev() {
        let shifted = if lag == 0 {
            x.clone()
        } else if lag >= t {
            tape.zeros(&[b, t, c])?
        } else {
            concat(&[tape.zeros(&[b, lag, c])?, x.slice(1, 0..t - lag)?], 1)?
        };
        lags.push(shifted);
    }
    if lags.len() == 1 {
        Ok(lags.pop().unwrap())
    } else {
        concat(&lags, 2)
    }
}

pub(crate) fn check_input<T: Scalar>(x: &Tensor<T>, d_in: usize) -> Result<()> {
    let shape = x.shape();
    if shape.len() != 3 || shape[2] != d_in {
        return Err(Error::Dimension {
            op: "forward",
            lhs: shape,
            rhs: vec![0, 0, d_in],
        });
    }
    check_finite(x, "input")
}

/// Embedded input plus the sinusoidal table.
pub(crate) fn embed_sequence<T: Scalar>(s: &Session<T>, embed: &Linear, x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    let e = embed.forward(s, x)?;
    let pe: Array<T> = positional_encoding(shape[1], embed.d_out)?;
    let pe = pe.to_tensor(s.tape(), false).expand(&[shape[0]])?;
    e.add(&pe)
}

impl<T: Scalar> Model<T> {
    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn fusion(&self) -> &FusionSpec {
        &self.fusion
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    /// Evaluates the network on a fresh non-trainable session.
    pub fn run(&self, x: &Array<T>) -> Result<ForwardOutput<T>> {
        let s = Session::new(&self.store, false);
        let x = x.to_tensor(s.tape(), false);
        self.forward(&s, &x)
    }

    pub fn forward(&self, s: &Session<T>, x: &Tensor<T>) -> Result<ForwardOutput<T>> {
        check_input(x, self.spec.d_in)?;
        let mut taps: IndexMap<String, Tensor<T>> = IndexMap::new();
        let mut layer_out: IndexMap<String, Tensor<T>> = IndexMap::new();
        match &self.body {
            Body::Recurrent(layers) => {
                let mut h = x.clone();
                for (j, p) in layers.iter().enumerate() {
                    h = lstm_layer(s, p, &h)?;
                    let name = format!("lstm.L{}", j + 1);
                    check_finite(&h, &name)?;
                    layer_out.insert(name, h.clone());
                }
            }
            Body::Transformer {
                embed,
                encoders,
                decoders,
            } => {
                let e = embed_sequence(s, embed, x)?;
                check_finite(&e, "embed")?;
                let mut m = e.clone();
                for (j, u) in encoders.iter().enumerate() {
                    m = u.forward(s, &m, None)?;
                    let name = format!("encoder.L{}", j + 1);
                    check_finite(&m, &name)?;
                    layer_out.insert(name, m.clone());
                }
                let mut h = e;
                for (j, u) in decoders.iter().enumerate() {
                    h = u.forward(s, &h, Some(&m))?;
                    let name = format!("decoder.L{}", j + 1);
                    check_finite(&h, &name)?;
                    layer_out.insert(name, h.clone());
                }
            }
            Body::Window { window, layers } => {
                let mut h = history_window(x, *window)?;
                for (j, l) in layers.iter().enumerate() {
                    h = l.forward(s, &h)?.tanh();
                    let name = format!("mlp.L{}", j + 1);
                    check_finite(&h, &name)?;
                    layer_out.insert(name, h.clone());
                }
            }
        }
        let mut features = Vec::with_capacity(self.fusion.taps.len());
        for (tap, proj) in self.fusion.taps.iter().zip(&self.projections) {
            let f = layer_out
                .get(&tap.id)
                .ok_or_else(|| Error::contract(format!("tap `{}` has no source layer", tap.id)))?
                .clone();
            taps.insert(tap.id.clone(), f.clone());
            let f = match proj {
                Some(p) => p.forward(s, &f)?,
                None => f,
            };
            features.push((tap.id.clone(), f));
        }
        let fused = fuse(&self.fusion, &features)?;
        let y = self.head.forward(s, &fused.tensor)?;
        check_finite(&y, "head")?;
        Ok(ForwardOutput { y, taps })
    }
}

impl<T: Scalar> Network<T> for Model<T> {
    fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn predict(&self, s: &Session<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(s, x)?.y)
    }
}
