use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// States beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

/// `ż = A·ẋ − β·|ẋ|·|z|^(n−1)·z − γ·ẋ·|z|^n`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoucWenParams {
    pub a: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n: f64,
}

impl Default for BoucWenParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            beta: 0.5,
            gamma: 0.5,
            n: 1.0,
        }
    }
}

impl BoucWenParams {
    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.beta, self.gamma, self.n].iter().all(|v| v.is_finite()) {
            return Err(Error::config("Bouc-Wen parameters must be finite"));
        }
        if self.n < 1.0 {
            return Err(Error::config(format!("Bouc-Wen exponent n = {} must be >= 1", self.n)));
        }
        Ok(())
    }

    /// Bound on `|z|` reached under sustained monotonic loading,
    /// `(A / (β + γ))^(1/n)`; `None` when `β + γ <= 0`.
    pub fn ultimate(&self) -> Option<f64> {
        let s = self.beta + self.gamma;
        (s > 0.0).then(|| (self.a / s).powf(1.0 / self.n))
    }

    /// Rate of the hysteretic variable.
    #[inline]
    pub fn rate(&self, xdot: f64, z: f64) -> f64 {
        let az = z.abs();
        let pow_n1 = if self.n == 1.0 { 1.0 } else { az.powf(self.n - 1.0) };
        let pow_n = az * pow_n1;
        self.a * xdot - self.beta * xdot.abs() * pow_n1 * z - self.gamma * xdot * pow_n
    }
}

/// Hysteretic variable `z` for a prescribed displacement history, `z(0) = 0`.
///
/// Displacement is linear between samples, so `ẋ` is constant over each
/// step and one classical RK4 step is taken per sample interval.
pub fn simulate_boucwen(x: &[f64], p: &BoucWenParams, dt: f64) -> Result<Vec<f64>> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("time step {dt} must be positive")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("excitation contains non-finite values"));
    }
    let mut z = Vec::with_capacity(x.len());
    let mut cur = 0.0;
    if !x.is_empty() {
        z.push(cur);
    }
    for (i, w) in x.windows(2).enumerate() {
        let v = (w[1] - w[0]) / dt;
        let k1 = p.rate(v, cur);
        let k2 = p.rate(v, cur + 0.5 * dt * k1);
        let k3 = p.rate(v, cur + 0.5 * dt * k2);
        let k4 = p.rate(v, cur + dt * k3);
        cur += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !cur.is_finite() || cur.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Stability {
                step: i + 1,
                magnitude: cur.abs(),
            });
        }
        z.push(cur);
    }
    Ok(z)
}

/// Single-spring restoring force `α·k·x + (1 − α)·k·z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoucWenSpring {
    pub stiffness: f64,
    /// Post-yield stiffness ratio.
    pub alpha: f64,
    pub hysteresis: BoucWenParams,
}

impl BoucWenSpring {
    pub fn force(&self, x: &[f64], dt: f64) -> Result<Vec<f64>> {
        let z = simulate_boucwen(x, &self.hysteresis, dt)?;
        Ok(x.iter()
            .zip(&z)
            .map(|(&x, &z)| self.alpha * self.stiffness * x + (1.0 - self.alpha) * self.stiffness * z)
            .collect())
    }
}
