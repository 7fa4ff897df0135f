use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::boucwen::{BoucWenParams, DIVERGENCE_LIMIT};

/// Lumped-mass shear building with a Bouc-Wen spring in every story.
///
/// Story `i` carries shear `α·k_i·δ_i + (1 − α)·k_i·z_i` where `δ_i` is the
/// inter-story drift. Damping is Rayleigh, fitted to `damping_ratio` on the
/// first two modes of the elastic system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdofSystem {
    pub masses: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub alpha: f64,
    pub damping_ratio: f64,
    pub stories: Vec<BoucWenParams>,
    /// RK4 steps per sample interval.
    pub substeps: usize,
}

impl Default for MdofSystem {
    fn default() -> Self {
        Self::uniform(5)
    }
}

impl MdofSystem {
    /// Synthetic building: unit story masses, story stiffness 2000 (first
    /// period about 0.5 s), yield drift 0.005, 10% post-yield ratio.
    pub fn uniform(stories: usize) -> Self {
        Self {
            masses: vec![1.0; stories],
            stiffness: vec![2000.0; stories],
            alpha: 0.1,
            damping_ratio: 0.05,
            stories: vec![
                BoucWenParams {
                    a: 1.0,
                    beta: 100.0,
                    gamma: 100.0,
                    n: 1.0,
                };
                stories
            ],
            substeps: 10,
        }
    }

    pub fn story_count(&self) -> usize {
        self.masses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.masses.len();
        if n == 0 || self.stiffness.len() != n || self.stories.len() != n {
            return Err(Error::config("masses, stiffnesses and story laws must have one entry per story"));
        }
        if !self.masses.iter().chain(&self.stiffness).all(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::config("masses and stiffnesses must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(self.damping_ratio >= 0.0) || self.substeps == 0 {
            return Err(Error::config("alpha must lie in [0, 1], damping >= 0, substeps >= 1"));
        }
        self.stories.iter().try_for_each(BoucWenParams::validate)
    }

    fn elastic_stiffness(&self) -> DMatrix<f64> {
        let n = self.story_count();
        let k = &self.stiffness;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                k[i] + if i + 1 < n { k[i + 1] } else { 0.0 }
            } else if j == i + 1 {
                -k[j]
            } else if i == j + 1 {
                -k[i]
            } else {
                0.0
            }
        })
    }

    /// Elastic circular frequencies, ascending.
    pub fn natural_frequencies(&self) -> Vec<f64> {
        let n = self.story_count();
        let k = self.elastic_stiffness();
        let scaled = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (self.masses[i] * self.masses[j]).sqrt());
        let mut w: Vec<f64> = SymmetricEigen::new(scaled).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        w.sort_by(f64::total_cmp);
        w
    }

    /// Rayleigh coefficients `(a0, a1)` for `C = a0·M + a1·K`.
    pub fn rayleigh(&self) -> (f64, f64) {
        let w = self.natural_frequencies();
        let z = self.damping_ratio;
        if w.len() < 2 {
            return (2.0 * z * w[0], 0.0);
        }
        let (wi, wj) = (w[0], w[1]);
        (2.0 * z * wi * wj / (wi + wj), 2.0 * z / (wi + wj))
    }

    /// Inter-story drifts `[T, stories]` (row-major) for a ground
    /// acceleration record sampled at `dt`, starting from rest.
    pub fn simulate(&self, ground: &[f64], dt: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("time step {dt} must be positive")));
        }
        if ground.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("ground motion contains non-finite values"));
        }
        let n = self.story_count();
        let (a0, a1) = self.rayleigh();
        let h = dt / self.substeps as f64;
        let mut state = vec![0.0; 3 * n];
        let mut out = Vec::with_capacity(ground.len() * n);
        let mut scratch = Rk4Scratch::new(3 * n);
        if !ground.is_empty() {
            out.extend(std::iter::repeat(0.0).take(n));
        }
        for (step, w) in ground.windows(2).enumerate() {
            for sub in 0..self.substeps {
                let frac = |s: f64| w[0] + (w[1] - w[0]) * (sub as f64 + s) / self.substeps as f64;
                let (g0, g_half, g1) = (frac(0.0), frac(0.5), frac(1.0));
                scratch.step(&mut state, h, |y, dy, stage| {
                    let ag = match stage {
                        0 => g0,
                        3 => g1,
                        _ => g_half,
                    };
                    self.derivative(y, dy, ag, a0, a1)
                });
            }
            let peak = state.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) });
            if peak > DIVERGENCE_LIMIT {
                return Err(Error::Stability {
                    step: step + 1,
                    magnitude: peak,
                });
            }
            let u = &state[..n];
            for i in 0..n {
                out.push(u[i] - if i == 0 { 0.0 } else { u[i - 1] });
            }
        }
        Ok(out)
    }

    fn derivative(&self, y: &[f64], dy: &mut [f64], ag: f64, a0: f64, a1: f64) {
        let n = self.story_count();
        let (u, rest) = y.split_at(n);
        let (v, z) = rest.split_at(n);
        let k = &self.stiffness;
        let drift = |s: &[f64], i: usize| s[i] - if i == 0 { 0.0 } else { s[i - 1] };
        let shear = |i: usize| self.alpha * k[i] * drift(u, i) + (1.0 - self.alpha) * k[i] * z[i];
        let damp = |i: usize| {
            let up = if i + 1 < n { k[i + 1] * drift(v, i + 1) } else { 0.0 };
            a0 * self.masses[i] * v[i] + a1 * (k[i] * drift(v, i) - up)
        };
        for i in 0..n {
            let above = if i + 1 < n { shear(i + 1) } else { 0.0 };
            dy[i] = v[i];
            dy[n + i] = (above - shear(i) - damp(i)) / self.masses[i] - ag;
            dy[2 * n + i] = self.stories[i].rate(drift(v, i), z[i]);
        }
    }
}

/// Classical RK4 with reusable stage buffers.
struct Rk4Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, y: &mut [f64], h: f64, mut f: impl FnMut(&[f64], &mut [f64], usize)) {
        let [k1, k2, k3, k4] = &mut self.k;
        f(y, k1, 0);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(&self.tmp, k2, 1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(&self.tmp, k3, 2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * k3[i];
        }
        f(&self.tmp, k4, 3);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}
