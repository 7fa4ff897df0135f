use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::{build_network, build_separated, match_capacity, ArchKind, ArchSpec, ExtractorKind, SeparatedNet, SeparatedNetSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::sim::{Dataset, Split};

use super::config::ExperimentConfig;
use super::report::{ComparisonReport, RunResult, REPORT_SCHEMA_VERSION};
use super::train::{train, RunMetrics};

fn fit_channels(spec: &ArchSpec, ds: &Dataset) -> ArchSpec {
    let mut s = spec.clone();
    s.d_in = ds.input_channels();
    s.d_out = ds.output_channels();
    s
}

/// Builds, trains and scores one configuration on `ds`.
pub fn run_once(cfg: &ExperimentConfig, ds: &Dataset) -> Result<RunMetrics> {
    let spec = fit_channels(&cfg.arch, ds);
    let mut net = build_network::<f64>(&spec)?;
    train(net.as_mut(), ds, &cfg.train)
}

/// Test MSE of every head of a separated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadLosses {
    pub live: f64,
    /// Indexed by depth, shallowest first.
    pub probes: Vec<f64>,
    pub multi: f64,
}

pub fn head_losses(net: &SeparatedNet<f64>, split: &Split) -> Result<HeadLosses> {
    if split.samples() == 0 {
        return Err(Error::contract("cannot evaluate an empty split"));
    }
    let depth = net.separated_spec().depth;
    let (mut live, mut probes, mut multi) = (0.0, vec![0.0; depth], 0.0);
    let sq = |t: &Tensor<f64>, y: &[f64]| t.with_data(|p| p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
    for start in (0..split.samples()).step_by(64) {
        let idx: Vec<usize> = (start..(start + 64).min(split.samples())).collect();
        let (x, y) = split.batch::<f64>(&idx);
        let out = net.run(&x)?;
        live += sq(&out.live, &y.data);
        multi += sq(&out.multi, &y.data);
        for (acc, p) in probes.iter_mut().zip(&out.probes) {
            *acc += sq(p, &y.data);
        }
    }
    let n = split.outputs.len() as f64;
    Ok(HeadLosses {
        live: live / n,
        probes: probes.into_iter().map(|v| v / n).collect(),
        multi: multi / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleSeed {
    pub seed: u64,
    pub best_epoch: usize,
    pub heads: HeadLosses,
    /// 1-based depth of the best single-level probe.
    pub best_single_depth: usize,
    pub deepest_beats_shallowest: bool,
    pub multi_within_best_single: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleReport {
    pub schema_version: u32,
    pub case: String,
    pub extractor: ExtractorKind,
    pub depth: usize,
    pub p: f64,
    pub seeds: Vec<PrincipleSeed>,
    pub mean_probe_mse: Vec<f64>,
    pub mean_multi_mse: f64,
    pub deepest_beats_shallowest: usize,
    pub multi_within_best_single: usize,
}

impl PrincipleReport {
    /// Test MSE table: one row per probe depth, then the multi-level row;
    /// one column per seed.
    pub fn table(&self) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = (0..self.depth)
            .map(|j| self.seeds.iter().map(|s| s.heads.probes[j]).collect())
            .collect();
        rows.push(self.seeds.iter().map(|s| s.heads.multi).collect());
        rows
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Trains the separated network once per seed and scores every probe depth
/// and the multi-level head on the test split.
pub fn run_principle_verification(
    extractor: ExtractorKind,
    ds: &Dataset,
    seeds: &[u64],
    base: &ExperimentConfig,
) -> Result<PrincipleReport> {
    if seeds.is_empty() {
        return Err(Error::config("principle verification needs at least one seed"));
    }
    let mut arch = fit_channels(&base.arch, ds);
    arch.kind = ArchKind::Separated;
    arch.extractor = extractor;
    let spec = SeparatedNetSpec::from_arch(&arch)?;
    if spec.depth < 3 {
        return Err(Error::config(format!("principle verification needs depth >= 3, got {}", spec.depth)));
    }
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = base.with_seed(seed);
        let mut net = build_separated::<f64>(&SeparatedNetSpec { seed, ..spec.clone() })?;
        let metrics = train(&mut net, ds, &cfg.train)?;
        let heads = head_losses(&net, &ds.test)?;
        let (best_j, best) = heads
            .probes
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
        rows.push(PrincipleSeed {
            seed,
            best_epoch: metrics.best_epoch,
            best_single_depth: best_j + 1,
            deepest_beats_shallowest: heads.probes[spec.depth - 1] < heads.probes[0],
            multi_within_best_single: heads.multi <= best,
            heads,
        });
    }
    let n = rows.len() as f64;
    Ok(PrincipleReport {
        schema_version: REPORT_SCHEMA_VERSION,
        case: ds.case.clone(),
        extractor,
        depth: spec.depth,
        p: spec.p,
        mean_probe_mse: (0..spec.depth)
            .map(|j| rows.iter().map(|r| r.heads.probes[j]).sum::<f64>() / n)
            .collect(),
        mean_multi_mse: rows.iter().map(|r| r.heads.multi).sum::<f64>() / n,
        deepest_beats_shallowest: rows.iter().filter(|r| r.deepest_beats_shallowest).count(),
        multi_within_best_single: rows.iter().filter(|r| r.multi_within_best_single).count(),
        seeds: rows,
    })
}

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    DecayFactor(Vec<f64>),
    Variant(Vec<ArchKind>),
}

impl SweepAxis {
    /// Parses `--axis p|variant` with comma-separated `--values`.
    pub fn parse(axis: &str, values: &str) -> Result<Self> {
        let items = values.split(',').map(str::trim).filter(|s| !s.is_empty());
        match axis {
            "p" | "decay" | "decay_factor" => items
                .map(|v| v.parse::<f64>().map_err(|_| Error::config(format!("`{v}` is not a decay factor"))))
                .collect::<Result<Vec<_>>>()
                .map(SweepAxis::DecayFactor),
            "variant" | "arch" => items.map(ArchKind::from_str).collect::<Result<Vec<_>>>().map(SweepAxis::Variant),
            other => Err(Error::config(format!("unknown sweep axis `{other}`; expected p or variant"))),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::DecayFactor(v) => v.len(),
            SweepAxis::Variant(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::DecayFactor(_) => f.write_str("decay_factor"),
            SweepAxis::Variant(_) => f.write_str("variant"),
        }
    }
}

fn result(label: String, spec: &ArchSpec, m: &RunMetrics) -> RunResult {
    RunResult {
        label,
        arch: spec.kind,
        case: m.case.clone(),
        seed: m.seed,
        d_model: spec.d_model,
        param_count: m.param_count,
        best_epoch: m.best_epoch,
        test_mse: m.test_mse,
    }
}

/// Trains every sweep point with the same seed and config.
pub fn sweep(axis: &SweepAxis, base: &ExperimentConfig, ds: &Dataset) -> Result<ComparisonReport> {
    if axis.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let base_spec = fit_channels(&base.arch, ds);
    let points: Vec<(String, ArchSpec)> = match axis {
        SweepAxis::DecayFactor(ps) => {
            if base_spec.taps()?.len() < 2 {
                return Err(Error::config(format!("{} has a single tap; the decay factor has no effect", base_spec.kind)));
            }
            ps.iter()
                .map(|&p| {
                    let mut s = base_spec.clone();
                    s.fusion.p = p;
                    (format!("p={p}"), s)
                })
                .collect()
        }
        SweepAxis::Variant(kinds) => kinds
            .iter()
            .map(|&k| {
                let mut s = base_spec.clone();
                s.kind = k;
                if matches!(k, ArchKind::LstmVariant(_)) {
                    s.depth = None;
                }
                (k.to_string(), s)
            })
            .collect(),
    };
    let mut runs = Vec::with_capacity(points.len());
    for (label, spec) in points {
        let cfg = ExperimentConfig {
            train: base.train.clone(),
            arch: spec.clone(),
        };
        let m = run_once(&cfg, ds)?;
        runs.push(result(label, &spec, &m));
    }
    ComparisonReport::assemble(&format!("sweep:{axis}"), runs)
}

/// Capacity-matched widths: the first kind keeps the base width and every
/// other kind gets the width whose parameter count is closest to it.
pub fn matched_specs(kinds: &[ArchKind], base: &ArchSpec) -> Result<Vec<ArchSpec>> {
    let Some(&first) = kinds.first() else {
        return Err(Error::config("no architectures to compare"));
    };
    for (i, k) in kinds.iter().enumerate() {
        if kinds[..i].contains(k) {
            return Err(Error::config(format!("{k} listed twice")));
        }
    }
    let reference = ArchSpec { kind: first, ..base.clone() };
    kinds
        .iter()
        .map(|&k| {
            let spec = ArchSpec { kind: k, ..base.clone() };
            if k == first {
                return Ok(reference.clone());
            }
            Ok(spec.with_width(match_capacity(&reference, &spec)?))
        })
        .collect()
}

/// Trains every (kind, case, seed) combination with capacity-matched
/// widths and summarises pyramid networks against their serial bases.
pub fn compare_architectures(
    kinds: &[ArchKind],
    cases: &[Dataset],
    seeds: &[u64],
    base: &ExperimentConfig,
) -> Result<ComparisonReport> {
    if cases.is_empty() || seeds.is_empty() {
        return Err(Error::config("compare needs at least one case and one seed"));
    }
    for (i, ds) in cases.iter().enumerate() {
        if cases[..i].iter().any(|c| c.case == ds.case) {
            return Err(Error::config(format!("case {} listed twice", ds.case)));
        }
    }
    let mut runs = Vec::new();
    for ds in cases {
        let specs = matched_specs(kinds, &fit_channels(&base.arch, ds))?;
        for &seed in seeds {
            for spec in &specs {
                let cfg = ExperimentConfig {
                    train: base.train.clone(),
                    arch: spec.clone(),
                }
                .with_seed(seed);
                let m = run_once(&cfg, ds)?;
                runs.push(result(spec.kind.to_string(), spec, &m));
            }
        }
    }
    ComparisonReport::assemble("compare", runs)
}
