use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::Network;
use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::params::Session;
use crate::scalar::Scalar;
use crate::sim::{Dataset, Split};

use super::config::TrainConfig;
use super::optim::{clip_grad_norm, Adam};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Largest number of samples pushed through one evaluation pass.
const EVAL_CHUNK: usize = 64;

/// Losses after one epoch. Epoch 0 is the untrained model and has no
/// training loss. Both values are the network's training objective, which
/// is the output MSE for every kind except the separated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub arch: String,
    pub case: String,
    pub seed: u64,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
    /// Output MSE on the test split with the restored parameters.
    pub test_mse: f64,
    /// Not serialised so metrics files stay reproducible.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl RunMetrics {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn check_channels<T: Scalar>(net: &dyn Network<T>, ds: &Dataset) -> Result<()> {
    let spec = net.spec();
    if spec.d_in != ds.input_channels() || spec.d_out != ds.output_channels() {
        return Err(Error::Dimension {
            op: "train",
            lhs: vec![spec.d_in, spec.d_out],
            rhs: vec![ds.input_channels(), ds.output_channels()],
        });
    }
    Ok(())
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(EVAL_CHUNK).map(move |s| (s..(s + EVAL_CHUNK).min(n)).collect())
}

fn non_empty(split: &Split) -> Result<()> {
    if split.samples() == 0 {
        return Err(Error::contract("cannot evaluate an empty split"));
    }
    Ok(())
}

/// Output MSE over every sample, step and channel of `split`.
pub fn evaluate<T: Scalar>(net: &dyn Network<T>, split: &Split) -> Result<f64> {
    non_empty(split)?;
    let mut sum = 0.0;
    for idx in chunks(split.samples()) {
        let (x, y) = split.batch::<T>(&idx);
        let s = Session::new(net.params(), false);
        let pred = net.predict(&s, &x.to_tensor(s.tape(), false))?;
        sum += pred.with_data(|p| p.iter().zip(&y.data).map(|(a, b)| (*a - *b).as_f64().powi(2)).sum::<f64>());
    }
    Ok(sum / split.outputs.len() as f64)
}

/// Training objective averaged over `split`.
pub fn objective<T: Scalar>(net: &dyn Network<T>, split: &Split) -> Result<f64> {
    non_empty(split)?;
    let mut sum = 0.0;
    for idx in chunks(split.samples()) {
        let (x, y) = split.batch::<T>(&idx);
        let s = Session::new(net.params(), false);
        let loss = net.loss(&s, &x.to_tensor(s.tape(), false), &y.to_tensor(s.tape(), false))?;
        sum += loss.item()?.as_f64() * idx.len() as f64;
    }
    Ok(sum / split.samples() as f64)
}

fn with_context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Mini-batch Adam with early stopping. The parameters of the epoch with
/// the lowest validation loss are restored before the test split is scored.
pub fn train<T: Scalar>(net: &mut dyn Network<T>, ds: &Dataset, cfg: &TrainConfig) -> Result<RunMetrics> {
    let started = Instant::now();
    cfg.validate()?;
    if ds.normalization.is_none() {
        return Err(Error::contract("training expects a normalized dataset"));
    }
    check_channels(net, ds)?;
    non_empty(&ds.train)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg, net.params());
    let clip = T::lit(cfg.clip_norm);

    let v0 = objective(net, &ds.valid)?;
    if !v0.is_finite() {
        return Err(Error::numeric("initial validation loss is not finite"));
    }
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_loss: None,
        valid_loss: v0,
    }];
    let (mut best_epoch, mut best_loss) = (0, v0);
    let mut best_values: Vec<Array<T>> = net.params().values();
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..ds.train.samples()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = ds.train.batch::<T>(idx);
            let s = Session::new(net.params(), true);
            let loss = net
                .loss(&s, &x.to_tensor(s.tape(), false), &y.to_tensor(s.tape(), false))
                .map_err(|e| with_context(e, epoch, b))?;
            let lv = loss.item()?.as_f64();
            if !lv.is_finite() {
                return Err(Error::numeric(format!("loss is {lv} at epoch {epoch}, batch {b}")));
            }
            loss.backward()?;
            let store = net.params_mut();
            store.zero_grad();
            store.accumulate(&s);
            let norm = clip_grad_norm(store, clip);
            if !norm.is_finite() {
                return Err(Error::numeric(format!("gradient norm is {norm} at epoch {epoch}, batch {b}")));
            }
            adam.step(store);
            sum += lv * idx.len() as f64;
        }
        let valid = objective(net, &ds.valid).map_err(|e| with_context(e, epoch, 0))?;
        if !valid.is_finite() {
            return Err(Error::numeric(format!("validation loss is {valid} after epoch {epoch}")));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: Some(sum / ds.train.samples() as f64),
            valid_loss: valid,
        });
        if valid < best_loss {
            best_epoch = epoch;
            best_loss = valid;
            best_values = net.params().values();
        } else if epoch - best_epoch >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    net.params_mut().set_values(best_values)?;
    let test_mse = evaluate(net, &ds.test)?;

    Ok(RunMetrics {
        schema_version: METRICS_SCHEMA_VERSION,
        arch: net.spec().kind.to_string(),
        case: ds.case.clone(),
        seed: cfg.seed,
        param_count: net.params().count(),
        epochs,
        best_epoch,
        best_valid_loss: best_loss,
        stopped_early,
        test_mse,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}
