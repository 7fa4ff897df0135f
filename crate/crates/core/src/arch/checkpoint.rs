//! Single-file checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "PYRCKPT\0"
//! version    u32
//! spec_len   u64
//! spec       spec_len bytes of ArchSpec JSON
//! count      u32
//! count x { name_len u32, name, ndim u32, dims u64 x ndim, values f64 x prod(dims) }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{build_network, ArchSpec, Network};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PYRCKPT\0";

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ArchSpec,
    pub params: Vec<(String, Array<f64>)>,
}

pub fn save_checkpoint<T: Scalar>(model: &dyn Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let spec = serde_json::to_vec(model.spec())?;
    buf.extend_from_slice(&(spec.len() as u64).to_le_bytes());
    buf.extend_from_slice(&spec);
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for p in model.params().iter() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.value.shape.len() as u32).to_le_bytes());
        for &d in &p.value.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &p.value.data {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let spec_len = r.u64()? as usize;
    let spec: ArchSpec = serde_json::from_slice(r.take(spec_len)?)?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("parameter too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Array::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { spec, params })
}

/// Rebuilds the network described in the checkpoint and loads its values.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Box<dyn Network<T>>> {
    let ckpt = read_checkpoint(path)?;
    let mut net = build_network::<T>(&ckpt.spec)?;
    let store = net.params_mut();
    if store.len() != ckpt.params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} parameters, architecture needs {}",
            ckpt.params.len(),
            store.len()
        )));
    }
    let mut values = Vec::with_capacity(ckpt.params.len());
    for (p, (name, arr)) in store.iter().zip(&ckpt.params) {
        if &p.name != name {
            return Err(Error::Format(format!("expected parameter `{}`, found `{name}`", p.name)));
        }
        values.push(Array {
            shape: arr.shape.clone(),
            data: arr.data.iter().map(|&v| T::lit(v)).collect(),
        });
    }
    store.set_values(values)?;
    Ok(net)
}
