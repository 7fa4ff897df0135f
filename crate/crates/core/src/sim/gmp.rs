use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Giuffré-Menegotto-Pinto steel with optional isotropic hardening.
///
/// Between reversals the stress follows
/// `σ* = b·ε* + (1 − b)·ε* / (1 + |ε*|^R)^(1/R)` in coordinates normalised by
/// the last reversal point and the current asymptote intersection. The
/// curvature `R = R0·(1 − cR1·ξ / (cR2 + ξ))` shrinks with the plastic
/// excursion `ξ`. `a1..a4` shift the yield asymptotes with the largest
/// strain range seen so far (`a1 = a3 = 0` disables this).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmpParams {
    pub e0: f64,
    pub fy: f64,
    pub b: f64,
    pub r0: f64,
    pub cr1: f64,
    pub cr2: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl Default for GmpParams {
    fn default() -> Self {
        Self {
            e0: 200_000.0,
            fy: 345.0,
            b: 0.01,
            r0: 20.0,
            cr1: 0.925,
            cr2: 0.15,
            a1: 0.0,
            a2: 1.0,
            a3: 0.0,
            a4: 1.0,
        }
    }
}

impl GmpParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e0, self.fy, self.b, self.r0, self.cr1, self.cr2, self.a1, self.a2, self.a3, self.a4];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("GMP parameters must be finite"));
        }
        if self.e0 <= 0.0 || self.fy <= 0.0 || self.r0 <= 0.0 || self.a2 <= 0.0 || self.a4 <= 0.0 {
            return Err(Error::config("E0, fy, R0, a2 and a4 must be positive"));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::config(format!("hardening ratio b = {} outside [0, 1]", self.b)));
        }
        Ok(())
    }

    pub fn yield_strain(&self) -> f64 {
        self.fy / self.e0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Virgin,
    Loading,
    Unloading,
}

/// Path-dependent material state.
#[derive(Debug, Clone)]
pub struct GmpMaterial {
    p: GmpParams,
    branch: Branch,
    eps: f64,
    sig: f64,
    eps_max: f64,
    eps_min: f64,
    eps_pl: f64,
    eps0: f64,
    sig0: f64,
    eps_r: f64,
    sig_r: f64,
}

impl GmpMaterial {
    pub fn new(p: GmpParams) -> Result<Self> {
        p.validate()?;
        let ey = p.yield_strain();
        Ok(Self {
            p,
            branch: Branch::Virgin,
            eps: 0.0,
            sig: 0.0,
            eps_max: ey,
            eps_min: -ey,
            eps_pl: 0.0,
            eps0: 0.0,
            sig0: 0.0,
            eps_r: 0.0,
            sig_r: 0.0,
        })
    }

    pub fn stress(&self) -> f64 {
        self.sig
    }

    /// Advances to strain `eps` and returns the stress.
    pub fn update(&mut self, eps: f64) -> f64 {
        let p = self.p;
        if p.b == 1.0 {
            self.eps = eps;
            self.sig = p.e0 * eps;
            return self.sig;
        }
        let ey = p.yield_strain();
        let esh = p.b * p.e0;
        let deps = eps - self.eps;

        if self.branch == Branch::Virgin {
            if deps.abs() < 10.0 * f64::EPSILON {
                return self.sig;
            }
            self.eps_max = ey;
            self.eps_min = -ey;
            if deps < 0.0 {
                self.branch = Branch::Unloading;
                self.eps0 = self.eps_min;
                self.sig0 = -p.fy;
                self.eps_pl = self.eps_min;
            } else {
                self.branch = Branch::Loading;
                self.eps0 = self.eps_max;
                self.sig0 = p.fy;
                self.eps_pl = self.eps_max;
            }
        }

        if self.branch == Branch::Unloading && deps > 0.0 {
            self.branch = Branch::Loading;
            self.eps_r = self.eps;
            self.sig_r = self.sig;
            self.eps_min = self.eps_min.min(self.eps);
            let d1 = (self.eps_max - self.eps_min) / (2.0 * p.a4 * ey);
            let shift = 1.0 + p.a3 * d1.powf(0.8);
            self.eps0 = (p.fy * shift - esh * ey * shift - self.sig_r + p.e0 * self.eps_r) / (p.e0 - esh);
            self.sig0 = p.fy * shift + esh * (self.eps0 - ey * shift);
            self.eps_pl = self.eps_max;
        } else if self.branch == Branch::Loading && deps < 0.0 {
            self.branch = Branch::Unloading;
            self.eps_r = self.eps;
            self.sig_r = self.sig;
            self.eps_max = self.eps_max.max(self.eps);
            let d1 = (self.eps_max - self.eps_min) / (2.0 * p.a2 * ey);
            let shift = 1.0 + p.a1 * d1.powf(0.8);
            self.eps0 = (-p.fy * shift + esh * ey * shift - self.sig_r + p.e0 * self.eps_r) / (p.e0 - esh);
            self.sig0 = -p.fy * shift + esh * (self.eps0 + ey * shift);
            self.eps_pl = self.eps_min;
        }

        let xi = ((self.eps_pl - self.eps0) / ey).abs();
        let r = p.r0 * (1.0 - p.cr1 * xi / (p.cr2 + xi));
        let ratio = (eps - self.eps_r) / (self.eps0 - self.eps_r);
        let den = (1.0 + ratio.abs().powf(r)).powf(1.0 / r);
        let s = p.b * ratio + (1.0 - p.b) * ratio / den;
        self.eps = eps;
        self.sig = s * (self.sig0 - self.sig_r) + self.sig_r;
        self.sig
    }
}

/// Stress history for a strain history starting from the virgin state.
pub fn gmp_stress(strain: &[f64], p: &GmpParams) -> Result<Vec<f64>> {
    if strain.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("strain history contains non-finite values"));
    }
    let mut m = GmpMaterial::new(*p)?;
    Ok(strain.iter().map(|&e| m.update(e)).collect())
}

/// The four material cases: hardening, strong kinematic hardening with
/// isotropic growth, cyclic softening, and a rounded low-curvature law with
/// softening (deterioration-like).
pub fn gmp_case(index: u8) -> Result<GmpParams> {
    let base = GmpParams::default();
    Ok(match index {
        1 => base,
        2 => GmpParams {
            b: 0.05,
            r0: 18.5,
            a1: 0.04,
            a3: 0.04,
            ..base
        },
        3 => GmpParams {
            b: 0.002,
            r0: 15.0,
            a1: -0.02,
            a3: -0.02,
            ..base
        },
        4 => GmpParams {
            b: 0.005,
            r0: 10.0,
            cr1: 0.9,
            cr2: 0.1,
            a1: -0.04,
            a3: -0.04,
            ..base
        },
        _ => return Err(Error::config(format!("no GMP case {index} (expected 1..=4)"))),
    })
}
