use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::boucwen::{BoucWenParams, BoucWenSpring};
use super::excitation::{gen_excitation, ExcitationSpec};
use super::gmp::{gmp_case, gmp_stress};
use super::mdof::MdofSystem;
use super::normalize::{minmax_normalize, NormalizationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    /// Ground acceleration to the drifts of a 5-story Bouc-Wen building.
    BoucWen,
    /// Strain to stress for GMP material set 1..=4.
    Gmp(u8),
    /// Displacement to force of a Bouc-Wen spring under growing cycles.
    BraceLike,
}

impl CaseKind {
    /// Split sizes of the full-size case.
    pub fn default_counts(self) -> (usize, usize, usize) {
        match self {
            CaseKind::BoucWen => (37, 13, 50),
            CaseKind::Gmp(_) => (4000, 1000, 1000),
            CaseKind::BraceLike => (320, 40, 40),
        }
    }

    pub fn default_length(self) -> usize {
        match self {
            CaseKind::BoucWen => 500,
            CaseKind::Gmp(_) => 1000,
            CaseKind::BraceLike => 2000,
        }
    }

    pub fn channels(self) -> (usize, usize) {
        match self {
            CaseKind::BoucWen => (1, MdofSystem::default().story_count()),
            _ => (1, 1),
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseKind::BoucWen => f.write_str("boucwen"),
            CaseKind::Gmp(i) => write!(f, "gmp_{i}"),
            CaseKind::BraceLike => f.write_str("brace_like"),
        }
    }
}

impl FromStr for CaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "boucwen" | "bouc_wen" => Ok(CaseKind::BoucWen),
            "brace_like" | "brace" => Ok(CaseKind::BraceLike),
            other => {
                let idx = other
                    .strip_prefix("gmp_")
                    .or_else(|| other.strip_prefix("op_"))
                    .and_then(|i| i.parse::<u8>().ok())
                    .filter(|i| (1..=4).contains(i));
                idx.map(CaseKind::Gmp)
                    .ok_or_else(|| Error::config(format!("unknown case `{s}` (boucwen, gmp_1..gmp_4, brace_like)")))
            }
        }
    }
}

impl Serialize for CaseKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaseKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Valid, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" | "validation" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::config(format!("unknown split `{s}` (train, valid, test)"))),
        }
    }
}

/// Input and output series `[samples, time, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Array<f64>,
    pub outputs: Array<f64>,
}

impl Split {
    pub fn from_samples(samples: &[Sample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::contract("split needs at least one sample"))?;
        let (t, ci, co) = (first.len, first.input_channels(), first.output_channels());
        let mut x = Vec::with_capacity(samples.len() * t * ci);
        let mut y = Vec::with_capacity(samples.len() * t * co);
        for s in samples {
            if s.len != t || s.input_channels() != ci || s.output_channels() != co {
                return Err(Error::shape("split", "all samples must share length and channel counts"));
            }
            x.extend_from_slice(&s.input);
            y.extend_from_slice(&s.output);
        }
        Ok(Self {
            inputs: Array::new(vec![samples.len(), t, ci], x)?,
            outputs: Array::new(vec![samples.len(), t, co], y)?,
        })
    }

    pub fn samples(&self) -> usize {
        self.inputs.shape[0]
    }

    pub fn length(&self) -> usize {
        self.inputs.shape[1]
    }

    /// Samples `idx` as `(inputs, outputs)` arrays of scalar type `T`.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> (Array<T>, Array<T>) {
        let pick = |a: &Array<f64>| {
            let per = a.shape[1] * a.shape[2];
            let mut data = Vec::with_capacity(idx.len() * per);
            for &i in idx {
                data.extend(a.data[i * per..(i + 1) * per].iter().map(|&v| T::lit(v)));
            }
            Array {
                shape: vec![idx.len(), a.shape[1], a.shape[2]],
                data,
            }
        };
        (pick(&self.inputs), pick(&self.outputs))
    }
}

/// One input/output pair, row-major `[time, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub len: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl Sample {
    pub fn input_channels(&self) -> usize {
        self.input.len() / self.len.max(1)
    }

    pub fn output_channels(&self) -> usize {
        self.output.len() / self.len.max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub case: String,
    pub train: Split,
    pub valid: Split,
    pub test: Split,
    pub normalization: Option<NormalizationRecord>,
    /// Generator seed and parameters, recorded in the manifest.
    pub generator: serde_json::Value,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &Split {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }

    pub fn length(&self) -> usize {
        self.train.length()
    }

    pub fn input_channels(&self) -> usize {
        self.train.inputs.shape[2]
    }

    pub fn output_channels(&self) -> usize {
        self.train.outputs.shape[2]
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.samples(), self.valid.samples(), self.test.samples())
    }

    /// Shuffles `samples` with `seed` and cuts train/valid/test in order.
    pub fn from_samples(
        case: impl Into<String>,
        mut samples: Vec<Sample>,
        counts: (usize, usize, usize),
        seed: u64,
        generator: serde_json::Value,
    ) -> Result<Self> {
        let (a, b, c) = counts;
        if a == 0 || b == 0 || c == 0 {
            return Err(Error::config("every split needs at least one sample"));
        }
        if samples.len() != a + b + c {
            return Err(Error::config(format!(
                "{} samples cannot fill splits {a}/{b}/{c}",
                samples.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5B11_7000_0000);
        samples.shuffle(&mut rng);
        let test = samples.split_off(a + b);
        let valid = samples.split_off(a);
        Ok(Self {
            case: case.into(),
            train: Split::from_samples(&samples)?,
            valid: Split::from_samples(&valid)?,
            test: Split::from_samples(&test)?,
            normalization: None,
            generator,
        })
    }
}

/// Seed of sample `i`; independent of generation order.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const BOUCWEN_DT: f64 = 0.02;
const BOUCWEN_BAND: (f64, f64) = (0.2, 10.0);
/// Peak ground acceleration range, m/s².
const BOUCWEN_PGA: (f64, f64) = (1.0, 6.0);
/// Peak strain range in multiples of the yield strain.
const GMP_PEAK: (f64, f64) = (0.5, 20.0);
/// Peak displacement range in multiples of the yield displacement.
const BRACE_PEAK: (f64, f64) = (5.0, 30.0);

fn brace_spring() -> BoucWenSpring {
    BoucWenSpring {
        stiffness: 1.0,
        alpha: 0.02,
        hysteresis: BoucWenParams {
            a: 1.0,
            beta: 0.6,
            gamma: 0.4,
            n: 1.5,
        },
    }
}

fn generate_sample(case: CaseKind, length: usize, seed: u64) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wave_seed: u64 = rng.gen();
    match case {
        CaseKind::BoucWen => {
            let system = MdofSystem::default();
            let ag = gen_excitation(
                &ExcitationSpec::BandLimitedNoise {
                    band: BOUCWEN_BAND,
                    amplitude: rng.gen_range(BOUCWEN_PGA.0..BOUCWEN_PGA.1),
                    duration: length as f64 * BOUCWEN_DT,
                    dt: BOUCWEN_DT,
                },
                wave_seed,
            )?;
            let drift = system.simulate(&ag, BOUCWEN_DT)?;
            Ok(Sample {
                len: length,
                input: ag,
                output: drift,
            })
        }
        CaseKind::Gmp(i) => {
            let params = gmp_case(i)?;
            let peak = rng.gen_range(GMP_PEAK.0..GMP_PEAK.1) * params.yield_strain();
            let components = rng.gen_range(2..=5);
            let strain = gen_excitation(
                &ExcitationSpec::SineSynthesis {
                    components,
                    freq_range: (1.0, 8.0),
                    amplitude: peak,
                    duration: 1.0,
                    dt: 1.0 / length as f64,
                },
                wave_seed,
            )?;
            let stress = gmp_stress(&strain, &params)?;
            Ok(Sample {
                len: length,
                input: strain,
                output: stress,
            })
        }
        CaseKind::BraceLike => {
            let spring = brace_spring();
            let uy = spring.hysteresis.ultimate().unwrap_or(1.0);
            let peak = rng.gen_range(BRACE_PEAK.0..BRACE_PEAK.1) * uy;
            let carrier = gen_excitation(
                &ExcitationSpec::SineSynthesis {
                    components: 3,
                    freq_range: (2.0, 12.0),
                    amplitude: 1.0,
                    duration: 1.0,
                    dt: 1.0 / length as f64,
                },
                wave_seed,
            )?;
            // amplitude grows linearly towards the peak, as in a cyclic test
            let x: Vec<f64> = carrier
                .iter()
                .enumerate()
                .map(|(t, v)| v * peak * (t as f64 + 1.0) / length as f64)
                .collect();
            let force = spring.force(&x, 1.0 / length as f64)?;
            Ok(Sample {
                len: length,
                input: x,
                output: force,
            })
        }
    }
}

fn generator_record(case: CaseKind, seed: u64) -> serde_json::Value {
    let params = match case {
        CaseKind::BoucWen => json!({
            "system": MdofSystem::default(),
            "dt": BOUCWEN_DT,
            "band_hz": BOUCWEN_BAND,
            "pga_range": BOUCWEN_PGA,
        }),
        CaseKind::Gmp(i) => json!({
            "material": gmp_case(i).ok(),
            "peak_strain_over_yield": GMP_PEAK,
        }),
        CaseKind::BraceLike => json!({
            "spring": brace_spring(),
            "peak_over_yield": BRACE_PEAK,
        }),
    };
    json!({ "seed": seed, "case": case.to_string(), "params": params })
}

/// Generates, splits and normalises a synthetic case.
pub fn build_dataset(case: CaseKind, counts: (usize, usize, usize), length: usize, seed: u64) -> Result<Dataset> {
    if length < 2 {
        return Err(Error::config("series length must be at least 2"));
    }
    let total = counts.0 + counts.1 + counts.2;
    let samples = (0..total)
        .map(|i| generate_sample(case, length, sample_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let raw = Dataset::from_samples(case.to_string(), samples, counts, seed, generator_record(case, seed))?;
    Ok(minmax_normalize(raw)?.0)
}
