//! Binary model files.
//!
//! Layout, all integers little-endian: the magic `GSAF`, a `u32` format
//! version, ten `u64` config fields, a `u8` dropped modality (0 for none,
//! otherwise index + 1), a `u64` parameter count and that many `f64` values
//! in parameter-set order.

use std::fs;
use std::path::Path;

use super::config::{Modality, ModelConfig};
use super::net::FusionNet;
use crate::error::{Error, Result};
use crate::tensor::ParameterSet;

const MAGIC: &[u8; 4] = b"GSAF";
const VERSION: u32 = 1;

fn config_fields(cfg: &ModelConfig) -> [usize; 10] {
    [
        cfg.d_face,
        cfg.d_bg,
        cfg.d_audio,
        cfg.vocab_size,
        cfg.d_text,
        cfg.h,
        cfg.d_k,
        cfg.d_z,
        cfg.mlp_hidden,
        cfg.n,
    ]
}

pub fn checkpoint_to_bytes(cfg: &ModelConfig, params: &ParameterSet) -> Result<Vec<u8>> {
    FusionNet::new(cfg.clone())?.check_params(params)?;
    let count = params.total_count();
    let mut out = Vec::with_capacity(4 + 4 + 80 + 1 + 8 + 8 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in config_fields(cfg) {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.push(cfg.dropped.map_or(0, |m| m.index() as u8 + 1));
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ModelConfig, ParameterSet)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut f = [0usize; 10];
    for v in f.iter_mut() {
        *v = usize::try_from(r.u64()?)
            .map_err(|_| Error::Checkpoint("config field too large".into()))?;
    }
    let dropped = match r.take(1)?[0] {
        0 => None,
        k @ 1..=4 => Some(Modality::ALL[k as usize - 1]),
        k => return Err(Error::Checkpoint(format!("bad dropped-modality tag {k}"))),
    };
    let cfg = ModelConfig {
        d_face: f[0],
        d_bg: f[1],
        d_audio: f[2],
        vocab_size: f[3],
        d_text: f[4],
        h: f[5],
        d_k: f[6],
        d_z: f[7],
        mlp_hidden: f[8],
        n: f[9],
        dropped,
    };
    let net = FusionNet::new(cfg.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let count = r.u64()?;
    if count != net.total_count() as u64 {
        return Err(Error::Checkpoint(format!(
            "file holds {count} parameters, config needs {}",
            net.total_count()
        )));
    }
    let payload = r.take(8 * count as usize)?.to_vec();
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut params = net.zero_params();
    params.assign_flat(&flat)?;
    Ok((cfg, params))
}

pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &ModelConfig, params: &ParameterSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_to_bytes(cfg, params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ParameterSet)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
