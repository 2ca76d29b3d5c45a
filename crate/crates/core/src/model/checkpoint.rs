//! `AFNN` checkpoint files: named f32 tensors, then batch-norm statistics.
//!
//! Layout (little-endian): magic `AFNN`, u32 version, u32 entry count, then
//! per entry u16 name length, UTF-8 name, u32 rank, u32 dims, f32 payload.
//! Running statistics follow the parameters as `<layer>.running_mean` and
//! `<layer>.running_var`; layers that never saw a training batch are omitted.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::config::ModelConfig;
use super::params::{Layout, ModelParams, Parameter};
use crate::autograd::RunningStats;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AFNN";
pub const CHECKPOINT_VERSION: u32 = 1;

fn push_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let stats: Vec<(&String, &RunningStats)> = params.stats.iter().filter(|(_, s)| s.is_initialized()).collect();
    let count = params.params().len() + 2 * stats.len();
    let mut out = Vec::with_capacity(16 + 4 * params.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for p in params.params() {
        push_entry(&mut out, &p.name, p.value.shape(), p.value.data());
    }
    for (name, s) in stats {
        push_entry(&mut out, &format!("{name}.running_mean"), &[s.channels()], &s.mean);
        push_entry(&mut out, &format!("{name}.running_var"), &[s.channels()], &s.var);
    }
    out
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes every entry in file order.
pub fn read_entries(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Checkpoint("missing AFNN magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Checkpoint(format!("`{name}` has an absurd shape")))?;
        let payload = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("payload overflow".into()))?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
        entries.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}

/// Rebuilds parameters for `config` from checkpoint bytes. Every parameter
/// the configuration expects must be present with the expected shape.
pub fn params_from_bytes(bytes: &[u8], config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut entries: HashMap<String, Tensor> = HashMap::new();
    for (name, t) in read_entries(bytes)? {
        if entries.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate entry `{name}`")));
        }
    }
    let layout = Layout::of(config);
    let mut params = Vec::with_capacity(layout.params.len());
    for (name, group, shape, _) in layout.params {
        let value = entries
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("model config expects `{name}`, not in checkpoint")))?;
        if value.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "`{name}` has shape {:?} in checkpoint but model config expects {shape:?}",
                value.shape()
            )));
        }
        params.push(Parameter {
            name,
            group,
            value,
            frozen: false,
        });
    }
    let mut stats = BTreeMap::new();
    for (name, ch) in layout.norms {
        let mean = entries.remove(&format!("{name}.running_mean"));
        let var = entries.remove(&format!("{name}.running_var"));
        let s = match (mean, var) {
            (Some(m), Some(v)) if m.shape() == [ch] && v.shape() == [ch] => {
                RunningStats::seeded(m.into_data(), v.into_data())
            }
            (None, None) => RunningStats::new(ch),
            _ => {
                return Err(Error::Checkpoint(format!(
                    "running statistics of `{name}` are incomplete or mis-shaped"
                )))
            }
        };
        stats.insert(name, s);
    }
    if let Some(extra) = entries.keys().min() {
        return Err(Error::Checkpoint(format!("checkpoint entry `{extra}` is unknown to the model config")));
    }
    Ok(ModelParams::from_parts(config.clone(), params, stats))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes, config)
}
