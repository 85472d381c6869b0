//! Binary checkpoint format, little-endian:
//!
//! ```text
//! magic      [u8; 4] = "WTCK"
//! version    u32
//! header     u32 length, then UTF-8 `key = value` lines (model.* and meta.*)
//! tensors    u32 count, then per tensor:
//!              u16 name length, name bytes, u8 rank, rank × u64 dims,
//!              product(dims) × f64
//! crc32      u32 over every preceding byte
//! ```

use std::path::Path;

use super::config::{ModelConfig, ModelKind};
use super::init::param_shapes;
use crate::autodiff::{ParamSet, Tensor};
use crate::config::KvConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"WTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamSet,
    /// Free-form provenance (seed, mode, epoch); stored under `meta.*`.
    pub metadata: KvConfig,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        check_layout(&self.config, &self.params)?;
        let mut header = KvConfig::new();
        self.config.write_config(&mut header);
        for k in self.metadata.keys() {
            header.set(&format!("meta.{k}"), self.metadata.get(k).expect("listed key"));
        }
        let text = header.to_string();

        let mut buf = Vec::with_capacity(64 + text.len() + 8 * self.params.num_scalars());
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
        buf.extend_from_slice(text.as_bytes());
        buf.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.push(t.rank() as u8);
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Checkpoint("file truncated (checksum failure)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().expect("4 bytes")) {
            return Err(Error::Checkpoint("checksum failure: file is truncated or corrupt".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {version} not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let header = KvConfig::parse(text)?;
        let kind = header
            .get("model.kind")
            .ok_or_else(|| Error::Checkpoint("header lacks model.kind".into()))?;
        let config = ModelConfig::from_config_as(&header, ModelKind::from_name(kind)?)?;
        let mut metadata = KvConfig::new();
        for k in header.keys() {
            if let Some(m) = k.strip_prefix("meta.") {
                metadata.set(m, header.get(k).expect("listed key"));
            }
        }

        let count = r.u32()? as usize;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after tensors".into()));
        }
        check_layout(&config, &params)?;
        Ok(Self { config, params, metadata })
    }
}

fn check_layout(cfg: &ModelConfig, params: &ParamSet) -> Result<()> {
    let want = param_shapes(cfg);
    let matches = want.len() == params.len()
        && want
            .iter()
            .zip(params.iter())
            .all(|((wn, ws), (n, t))| wn == n && ws.as_slice() == t.shape());
    if matches {
        Ok(())
    } else {
        Err(Error::Checkpoint(format!("parameters do not match the layout of {cfg:?}")))
    }
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
            .ok_or_else(|| Error::Checkpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let bytes = checkpoint.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a checkpoint; with `expected`, the stored architecture must equal it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(want) = expected {
        if !same_architecture(want, &ck.config) {
            return Err(Error::Checkpoint(format!(
                "{}: config mismatch: checkpoint has {:?}, expected {:?}",
                path.display(),
                ck.config,
                want
            )));
        }
    }
    Ok(ck)
}

/// Equal up to dropout, which does not change the parameters.
pub fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    param_shapes(a) == param_shapes(b)
        && match (a, b) {
            (ModelConfig::Timer(x), ModelConfig::Timer(y)) => {
                x.heads == y.heads && x.patch == y.patch && x.context_tokens == y.context_tokens
            }
            (ModelConfig::Transformer(x), ModelConfig::Transformer(y)) => {
                x.decoder.heads == y.decoder.heads && x.channels == y.channels
            }
            (ModelConfig::Lstm(_), ModelConfig::Lstm(_)) => true,
            _ => false,
        }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, TimerConfig};

    fn ck() -> Checkpoint {
        let config = ModelConfig::Timer(TimerConfig::tiny());
        let params = init_params(&config, 11).unwrap();
        let mut metadata = KvConfig::new();
        metadata.set("seed", 11);
        metadata.set("mode", "pretrain");
        Checkpoint { config, params, metadata }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = ck();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truncation_and_mismatch_are_rejected() {
        let c = ck();
        let bytes = c.to_bytes().unwrap();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 9]).unwrap_err();
        assert!(err.to_string().contains("checksum"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &c).unwrap();
        let other = ModelConfig::Timer(TimerConfig { model_dim: 16, ..TimerConfig::tiny() });
        let err = load_checkpoint(&path, Some(&other)).unwrap_err().to_string();
        assert!(err.contains("model_dim: 16") && err.contains("model_dim: 32"), "{err}");
        assert!(load_checkpoint(&path, Some(&c.config)).is_ok());
    }
}
