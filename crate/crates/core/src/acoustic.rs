//! Acoustic feature sequences and the `VQVCFEAT` container.
//!
//! ```text
//! magic "VQVCFEAT" | version u16 | frame_dim u32 | frame_count u32 | f32 LE frames, row-major
//! ```

use std::io::Read;
use std::path::Path;

use crate::error::{contract, Error, Result};

pub const FEAT_MAGIC: &[u8; 8] = b"VQVCFEAT";
pub const FEAT_VERSION: u16 = 1;

/// `m × dim` frames. Training targets carry an implicit stop label on the last frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticSeq {
    dim: usize,
    data: Vec<f32>,
    /// Set by free-running decoding when `max_len` was hit without a stop.
    pub truncated: bool,
}

impl AcousticSeq {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(contract(format!("{} values do not form frames of dim {dim}", data.len())));
        }
        Ok(Self {
            dim,
            data,
            truncated: false,
        })
    }

    pub fn from_frames(dim: usize, frames: &[Vec<f32>]) -> Result<Self> {
        if frames.iter().any(|f| f.len() != dim) {
            return Err(contract("frame of wrong dimension"));
        }
        Self::new(dim, frames.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// 1 on the final frame, 0 elsewhere.
    pub fn stop_labels(&self) -> Vec<f32> {
        let m = self.len();
        (0..m).map(|i| if i + 1 == m { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.data.len() * 4);
        out.extend_from_slice(FEAT_MAGIC);
        out.extend_from_slice(&FEAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 18 || &b[..8] != FEAT_MAGIC {
            return Err(Error::Format("not a VQVCFEAT file".into()));
        }
        let version = u16::from_le_bytes([b[8], b[9]]);
        if version != FEAT_VERSION {
            return Err(Error::Format(format!("unsupported VQVCFEAT version {version}")));
        }
        let dim = u32::from_le_bytes(b[10..14].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(b[14..18].try_into().unwrap()) as usize;
        let body = &b[18..];
        if body.len() != dim * count * 4 {
            return Err(Error::Format(format!(
                "VQVCFEAT payload is {} bytes, header says {dim}x{count}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut b = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut b))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&b)
    }
}
