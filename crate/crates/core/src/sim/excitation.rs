use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Excitation recipes. `amplitude` is the peak absolute value of the
/// returned series; frequencies are in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExcitationSpec {
    /// White Gaussian noise with every spectral line outside
    /// `[band.0, band.1]` removed.
    BandLimitedNoise {
        band: (f64, f64),
        amplitude: f64,
        duration: f64,
        dt: f64,
    },
    /// Sum of sinusoids with random frequency, phase and weight.
    SineSynthesis {
        components: usize,
        freq_range: (f64, f64),
        amplitude: f64,
        duration: f64,
        dt: f64,
    },
}

impl ExcitationSpec {
    pub fn dt(&self) -> f64 {
        match self {
            ExcitationSpec::BandLimitedNoise { dt, .. } | ExcitationSpec::SineSynthesis { dt, .. } => *dt,
        }
    }

    /// Number of samples, `round(duration / dt)`.
    pub fn len(&self) -> usize {
        match self {
            ExcitationSpec::BandLimitedNoise { duration, dt, .. } | ExcitationSpec::SineSynthesis { duration, dt, .. } => {
                (duration / dt).round() as usize
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn scale_to_peak(mut v: Vec<f64>, amplitude: f64) -> Vec<f64> {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        let c = amplitude / peak;
        v.iter_mut().for_each(|x| *x *= c);
    }
    v
}

pub fn gen_excitation(spec: &ExcitationSpec, seed: u64) -> Result<Vec<f64>> {
    let dt = spec.dt();
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("time step {dt} must be positive")));
    }
    let n = spec.len();
    if n < 2 {
        return Err(Error::config("excitation needs at least two samples"));
    }
    let nyquist = 0.5 / dt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *spec {
        ExcitationSpec::BandLimitedNoise { band: (lo, hi), amplitude, .. } => {
            if !(lo > 0.0 && lo < hi && hi <= nyquist) {
                return Err(Error::config(format!(
                    "band [{lo}, {hi}] Hz must satisfy 0 < low < high <= Nyquist ({nyquist} Hz)"
                )));
            }
            let df = 1.0 / (n as f64 * dt);
            let in_band = |k: usize| {
                let f = k.min(n - k) as f64 * df;
                f >= lo && f <= hi
            };
            if !(1..n).any(in_band) {
                return Err(Error::config(format!("band [{lo}, {hi}] Hz contains no frequency line at this resolution")));
            }
            let mut buf: Vec<Complex<f64>> = (0..n)
                .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
                .collect();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut buf);
            for (k, c) in buf.iter_mut().enumerate() {
                if !in_band(k) {
                    *c = Complex::new(0.0, 0.0);
                }
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            Ok(scale_to_peak(buf.into_iter().map(|c| c.re).collect(), amplitude))
        }
        ExcitationSpec::SineSynthesis {
            components,
            freq_range: (lo, hi),
            amplitude,
            ..
        } => {
            if components == 0 {
                return Err(Error::config("sine synthesis needs at least one component"));
            }
            if !(lo > 0.0 && lo <= hi && hi <= nyquist) {
                return Err(Error::config(format!(
                    "frequency range [{lo}, {hi}] Hz must satisfy 0 < low <= high <= Nyquist ({nyquist} Hz)"
                )));
            }
            let waves: Vec<(f64, f64, f64)> = (0..components)
                .map(|_| {
                    let f = if lo == hi { lo } else { rng.gen_range(lo..hi) };
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    let weight = if components == 1 { 1.0 } else { rng.gen_range(0.2..1.0) };
                    (f, phase, weight)
                })
                .collect();
            let v = (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    waves.iter().map(|&(f, ph, w)| w * (2.0 * PI * f * t + ph).sin()).sum()
                })
                .collect();
            Ok(scale_to_peak(v, amplitude))
        }
    }
}
