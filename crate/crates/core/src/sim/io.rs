//! Dataset directories.
//!
//! A directory holds `manifest.json` and one `<split>.bin` per split. Each
//! binary file is a little-endian `f32` array `[samples, time, channels]`
//! whose channel axis lists the input channels followed by the output
//! channels.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::error::{Error, Result};

use super::dataset::{Dataset, Sample, Split, SplitName};
use super::normalize::{minmax_normalize, NormalizationRecord};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub case: String,
    pub series_length: usize,
    pub splits: SplitSizes,
    pub input_channels: usize,
    pub output_channels: usize,
    pub dtype: String,
    pub layout: String,
    pub normalization: Option<NormalizationRecord>,
    pub generator: serde_json::Value,
}

fn split_path(dir: &Path, name: SplitName) -> PathBuf {
    dir.join(format!("{}.bin", name.as_str()))
}

pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (train, valid, test) = ds.counts();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        case: ds.case.clone(),
        series_length: ds.length(),
        splits: SplitSizes { train, valid, test },
        input_channels: ds.input_channels(),
        output_channels: ds.output_channels(),
        dtype: "float32-le".into(),
        layout: "[samples, time, channels]; inputs then outputs".into(),
        normalization: ds.normalization.clone(),
        generator: ds.generator.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let (ci, co) = (ds.input_channels(), ds.output_channels());
    for name in SplitName::ALL {
        let split = ds.split(name);
        let mut buf = Vec::with_capacity(split.samples() * split.length() * (ci + co) * 4);
        let rows_in = split.inputs.data.chunks_exact(ci);
        let rows_out = split.outputs.data.chunks_exact(co);
        for (x, y) in rows_in.zip(rows_out) {
            for &v in x.iter().chain(y) {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(split_path(dir, name), buf)?;
    }
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported manifest schema {}", m.schema_version)));
    }
    Ok(m)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let (t, ci, co) = (m.series_length, m.input_channels, m.output_channels);
    if t == 0 || ci == 0 || co == 0 {
        return Err(Error::Format("manifest declares an empty dimension".into()));
    }
    let read = |name: SplitName, n: usize| -> Result<Split> {
        let bytes = fs::read(split_path(dir, name))?;
        let expect = n * t * (ci + co) * 4;
        if bytes.len() != expect {
            return Err(Error::Format(format!(
                "{}.bin holds {} bytes, manifest implies {expect}",
                name.as_str(),
                bytes.len()
            )));
        }
        let mut x = Vec::with_capacity(n * t * ci);
        let mut y = Vec::with_capacity(n * t * co);
        for (i, c) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            if i % (ci + co) < ci {
                x.push(v);
            } else {
                y.push(v);
            }
        }
        Ok(Split {
            inputs: Array::new(vec![n, t, ci], x)?,
            outputs: Array::new(vec![n, t, co], y)?,
        })
    };
    Ok(Dataset {
        case: m.case.clone(),
        train: read(SplitName::Train, m.splits.train)?,
        valid: read(SplitName::Valid, m.splits.valid)?,
        test: read(SplitName::Test, m.splits.test)?,
        normalization: m.normalization,
        generator: m.generator,
    })
}

fn read_csv_matrix(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let width = reader.headers()?.len();
    let mut data = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Format(format!("{}: row {} has {} columns, header has {width}", path.display(), row + 2, rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("{}: `{field}` on row {} is not a number", path.display(), row + 2)))?;
            data.push(v);
        }
    }
    Ok((width, data))
}

/// Imports externally produced series.
///
/// `dir` holds one file pair per sample, `<name>_input.csv` and
/// `<name>_output.csv`. Each file has a header row, then one row per time
/// step and one column per channel. Pairs are taken in name order, shuffled
/// with `seed`, split by `counts` and normalised.
pub fn import_csv(dir: impl AsRef<Path>, counts: (usize, usize, usize), seed: u64) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix("_input.csv")).map(String::from))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::config(format!("no *_input.csv files in {}", dir.display())));
    }
    let mut samples = Vec::with_capacity(names.len());
    for name in &names {
        let (ci, input) = read_csv_matrix(&dir.join(format!("{name}_input.csv")))?;
        let (co, output) = read_csv_matrix(&dir.join(format!("{name}_output.csv")))?;
        let len = input.len() / ci.max(1);
        if len == 0 || output.len() / co.max(1) != len {
            return Err(Error::Format(format!("sample `{name}`: input and output lengths differ or are empty")));
        }
        samples.push(Sample { len, input, output });
    }
    let generator = serde_json::json!({ "seed": seed, "source": "csv", "files": names });
    let raw = Dataset::from_samples("csv", samples, counts, seed, generator)?;
    Ok(minmax_normalize(raw)?.0)
}
