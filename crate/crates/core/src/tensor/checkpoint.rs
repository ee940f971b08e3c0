//! Binary checkpoint format.
//!
//! ```text
//! magic   "VQVCCKPT"
//! version u16 LE
//! record* { name_len u32 LE, name utf-8, rank u8, dims u32 LE * rank, payload f32 LE * prod(dims) }
//! ```
//!
//! Adam moments are stored as `opt/m/<name>` and `opt/v/<name>`, the step
//! count as the rank-0 record `opt/step`. String metadata rides in record
//! names of the form `meta/<key>=<value>` with an empty rank-1 payload.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Param, ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VQVCCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

const OPT_M: &str = "opt/m/";
const OPT_V: &str = "opt/v/";
const OPT_STEP: &str = "opt/step";
const META: &str = "meta/";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore<f32>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(params: ParamStore<f32>) -> Self {
        Self {
            params,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for (k, v) in &self.meta {
            write_record(&mut out, &format!("{META}{k}={v}"), &[0], &[]);
        }
        write_record(&mut out, OPT_STEP, &[], &[self.params.step() as f32]);
        for (name, p) in self.params.iter() {
            write_record(&mut out, name, p.value.shape(), p.value.data());
            write_record(&mut out, &format!("{OPT_M}{name}"), p.m.shape(), p.m.data());
            write_record(&mut out, &format!("{OPT_V}{name}"), p.v.shape(), p.v.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a VQVCCKPT checkpoint".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut values = BTreeMap::new();
        let mut moments_m = BTreeMap::new();
        let mut moments_v = BTreeMap::new();
        let mut meta = BTreeMap::new();
        let mut step = 0u64;
        while r.pos < bytes.len() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("record name is not utf-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let payload: Vec<f32> = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(dims, payload).map_err(|e| Error::Format(e.to_string()))?;
            if let Some(kv) = name.strip_prefix(META) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("malformed meta record '{name}'")))?;
                meta.insert(k.to_string(), v.to_string());
            } else if name == OPT_STEP {
                step = t.item() as u64;
            } else if let Some(p) = name.strip_prefix(OPT_M) {
                moments_m.insert(p.to_string(), t);
            } else if let Some(p) = name.strip_prefix(OPT_V) {
                moments_v.insert(p.to_string(), t);
            } else {
                values.insert(name, t);
            }
        }
        let mut params = ParamStore::new();
        for (name, value) in values {
            let zeros = || Tensor::zeros(value.shape().to_vec());
            let m = moments_m.remove(&name).unwrap_or_else(zeros);
            let v = moments_v.remove(&name).unwrap_or_else(zeros);
            if m.shape() != value.shape() || v.shape() != value.shape() {
                return Err(Error::Format(format!("optimizer moments for '{name}' have the wrong shape")));
            }
            params.insert_param(
                &name,
                Param {
                    value,
                    grad: None,
                    m,
                    v,
                },
            );
        }
        if let Some(orphan) = moments_m.keys().chain(moments_v.keys()).next() {
            return Err(Error::Format(format!("optimizer moments for unknown parameter '{orphan}'")));
        }
        params.set_step(step);
        Ok(Self { params, meta })
    }
}

fn write_record(out: &mut Vec<u8>, name: &str, dims: &[usize], payload: &[f32]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::AdamConfig;

    fn sample() -> Checkpoint {
        let mut p = ParamStore::new();
        p.insert("enc/w", Tensor::new([2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        p.insert("bias", Tensor::scalar(-0.5));
        p.accumulate_grad("enc/w", &Tensor::full([2, 3], 0.1)).unwrap();
        p.accumulate_grad("bias", &Tensor::scalar(1.0)).unwrap();
        p.adam_step(&AdamConfig::default()).unwrap();
        Checkpoint::new(p).with_meta("kind", "test").with_meta("config_hash", "00ff")
    }

    #[test]
    fn round_trip_preserves_everything() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.params.step(), 1);
        assert_eq!(back.meta("kind"), Some("test"));
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..8], b"VQVCCKPT");
        assert_eq!(u16::from_le_bytes([b[8], b[9]]), 1);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"NOTACKPT\x01\x00").is_err());
        let mut b = sample().to_bytes();
        b.truncate(b.len() - 3);
        assert!(Checkpoint::from_bytes(&b).is_err());
    }
}
