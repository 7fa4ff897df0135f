use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::ArchKind;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Each loss divided by the largest one.
pub fn normalized_loss(losses: &[f64]) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::contract("normalized loss of an empty list"));
    }
    if let Some(bad) = losses.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::contract(format!("losses must be positive and finite, got {bad}")));
    }
    let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(losses.iter().map(|l| l / max).collect())
}

/// Pairs where `a` is strictly below `b`; ties count for neither side.
pub fn win_count(a: &[f64], b: &[f64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x < y).count()
}

/// One trained configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Sweep point or architecture name.
    pub label: String,
    pub arch: String,
    pub case: String,
    pub seed: u64,
    pub d_model: usize,
    pub param_count: usize,
    pub best_epoch: usize,
    pub test_mse: f64,
    /// Largest test MSE within the row's (case, seed) group.
    pub loss_max: f64,
    pub normalized_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub runs: usize,
    pub mean_test_mse: f64,
    pub mean_normalized_loss: f64,
}

/// Pyramid network against its serial counterpart over matching
/// (case, seed) runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pyramid: String,
    pub serial: String,
    pub trials: usize,
    pub wins: usize,
    pub win_rate: f64,
    /// Mean of `(serial − pyramid) / serial` test MSE.
    pub mean_relative_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub labels: Vec<LabelSummary>,
    pub pairs: Vec<PairSummary>,
}

/// Result of one run before normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub label: String,
    pub arch: ArchKind,
    pub case: String,
    pub seed: u64,
    pub d_model: usize,
    pub param_count: usize,
    pub best_epoch: usize,
    pub test_mse: f64,
}

impl ComparisonReport {
    /// Normalises within each (case, seed) group. Rows are ordered by case,
    /// then seed, then the order labels first appear in `runs`.
    pub fn assemble(experiment: &str, runs: Vec<RunResult>) -> Result<Self> {
        let mut label_order: Vec<String> = Vec::new();
        for r in &runs {
            if !label_order.contains(&r.label) {
                label_order.push(r.label.clone());
            }
        }
        let rank = |l: &str| label_order.iter().position(|x| x == l).unwrap();

        let mut groups: BTreeMap<(String, u64), Vec<RunResult>> = BTreeMap::new();
        for r in runs {
            groups.entry((r.case.clone(), r.seed)).or_default().push(r);
        }
        let mut rows = Vec::new();
        for ((case, seed), mut group) in groups {
            group.sort_by_key(|r| rank(&r.label));
            if group.windows(2).any(|w| w[0].label == w[1].label) {
                return Err(Error::contract(format!("duplicate label in group ({case}, {seed})")));
            }
            let losses: Vec<f64> = group.iter().map(|r| r.test_mse).collect();
            let norm = normalized_loss(&losses)?;
            let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (r, n) in group.into_iter().zip(norm) {
                rows.push(ReportRow {
                    label: r.label,
                    arch: r.arch.to_string(),
                    case: r.case,
                    seed: r.seed,
                    d_model: r.d_model,
                    param_count: r.param_count,
                    best_epoch: r.best_epoch,
                    test_mse: r.test_mse,
                    loss_max: max,
                    normalized_loss: n,
                });
            }
        }

        let labels = label_order
            .iter()
            .map(|l| {
                let mine: Vec<&ReportRow> = rows.iter().filter(|r| &r.label == l).collect();
                let n = mine.len() as f64;
                LabelSummary {
                    label: l.clone(),
                    runs: mine.len(),
                    mean_test_mse: mine.iter().map(|r| r.test_mse).sum::<f64>() / n,
                    mean_normalized_loss: mine.iter().map(|r| r.normalized_loss).sum::<f64>() / n,
                }
            })
            .collect();

        let mut pairs = Vec::new();
        for kind in ArchKind::COMPARISON {
            let Some(serial) = kind.serial_counterpart() else { continue };
            let find = |k: ArchKind, case: &str, seed: u64| {
                rows.iter()
                    .find(|r| r.arch == k.to_string() && r.case == case && r.seed == seed)
                    .map(|r| r.test_mse)
            };
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for r in rows.iter().filter(|r| r.arch == kind.to_string()) {
                if let Some(s) = find(serial, &r.case, r.seed) {
                    a.push(r.test_mse);
                    b.push(s);
                }
            }
            if a.is_empty() {
                continue;
            }
            let wins = win_count(&a, &b);
            pairs.push(PairSummary {
                pyramid: kind.to_string(),
                serial: serial.to_string(),
                trials: a.len(),
                wins,
                win_rate: wins as f64 / a.len() as f64,
                mean_relative_reduction: a.iter().zip(&b).map(|(p, s)| (s - p) / s).sum::<f64>() / a.len() as f64,
            });
        }

        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            rows,
            labels,
            pairs,
        })
    }

    /// Rows grouped by (case, seed).
    pub fn groups(&self) -> BTreeMap<(String, u64), Vec<&ReportRow>> {
        let mut g: BTreeMap<(String, u64), Vec<&ReportRow>> = BTreeMap::new();
        for r in &self.rows {
            g.entry((r.case.clone(), r.seed)).or_default().push(r);
        }
        g
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported report schema {}", r.schema_version)));
        }
        Ok(r)
    }
}
