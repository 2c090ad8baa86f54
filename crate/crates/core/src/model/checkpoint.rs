//! Checkpoint directory: `manifest.txt` (hyperparameters, provenance and
//! tensor shapes as key-value text) and `params.bin`.
//!
//! `params.bin` is little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "SHARECK1"
//! sections   u32
//! per section:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   rank     u32, dims (rank × u64)
//!   values   product(dims) × f64
//! ```

use std::fs;
use std::path::Path;

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::numerics::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"SHARECK1";
pub const MANIFEST: &str = "manifest.txt";
pub const PARAMS: &str = "params.bin";

pub fn model_config_to_kv(cfg: &ModelConfig, kv: &mut KeyValues) {
    kv.set("model.variant", cfg.variant);
    kv.set("model.lots", cfg.lots);
    kv.set("model.feature_width", cfg.feature_width);
    kv.set("model.hidden", cfg.hidden);
    kv.set("model.bins", cfg.bins);
    kv.set("model.latent", cfg.latent);
    kv.set("model.window", cfg.window);
    kv.set("model.horizon", cfg.horizon);
    kv.set("model.cxt_layers", cfg.cxt_layers);
    kv.set("model.beta", cfg.beta);
    kv.set("model.ce_all_steps", cfg.ce_all_steps);
    kv.set("model.latent_scaling", cfg.latent_scaling);
}

pub fn model_config_from_kv(kv: &KeyValues) -> Result<ModelConfig> {
    Ok(ModelConfig {
        variant: kv.require::<String>("model.variant")?.parse()?,
        lots: kv.require("model.lots")?,
        feature_width: kv.require("model.feature_width")?,
        hidden: kv.require("model.hidden")?,
        bins: kv.require("model.bins")?,
        latent: kv.require("model.latent")?,
        window: kv.require("model.window")?,
        horizon: kv.require("model.horizon")?,
        cxt_layers: kv.require("model.cxt_layers")?,
        beta: kv.require("model.beta")?,
        ce_all_steps: kv.require("model.ce_all_steps")?,
        latent_scaling: kv.require("model.latent_scaling")?,
    })
}

pub fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + store.total_len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::parse("checkpoint", "truncated parameter file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::parse("checkpoint", "bad magic"));
    }
    let sections = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..sections {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::parse("checkpoint", "section name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        if count > bytes.len() / 8 {
            return Err(Error::parse("checkpoint", format!("section `{name}` larger than file")));
        }
        let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        store.register(name, Tensor::new(dims, values)?)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::parse("checkpoint", "trailing bytes after last section"));
    }
    Ok(store)
}

pub fn save_checkpoint(dir: &Path, params: &ModelParams, provenance: &KeyValues) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut kv = provenance.clone();
    model_config_to_kv(&params.config, &mut kv);
    for (_, name, t) in params.store.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        kv.set(format!("shape.{name}"), dims.join("x"));
    }
    fs::write(dir.join(PARAMS), encode_params(&params.store))?;
    fs::write(dir.join(MANIFEST), kv.render())?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, KeyValues)> {
    let kv = KeyValues::parse(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let config = model_config_from_kv(&kv)?;
    let store = decode_params(&fs::read(dir.join(PARAMS))?)?;
    Ok((ModelParams::from_store(config, store)?, kv))
}
