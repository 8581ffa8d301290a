//! Checkpoint files.
//!
//! Layout (little-endian): magic `CVCK1`, `u32` manifest length, JSON
//! manifest, `u32` blob count, then per blob: `u16` name length, UTF-8 name,
//! `u8` rank, `u32` per dimension, `f32` data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::sampler::RngState;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"CVCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerEntry {
    pub language: u16,
    pub rng: RngState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub architecture: String,
    pub geometry: String,
    pub multiscale: String,
    /// `(language id, output classes)` in id order.
    pub languages: Vec<(u16, usize)>,
    pub optimizer: OptimizerKind,
    pub optimizer_steps: u64,
    pub step: u64,
    pub finetuning: bool,
    pub seed: u64,
    pub samplers: Vec<SamplerEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub blobs: Vec<Blob>,
}

impl Checkpoint {
    pub fn blob(&self, name: &str) -> Option<&Blob> {
        self.blobs.iter().find(|b| b.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec_pretty(&self.manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for b in &self.blobs {
            let name = b.name.as_bytes();
            let name_len = u16::try_from(name.len()).map_err(|_| Error::contract("blob name too long"))?;
            let rank = u8::try_from(b.shape.len()).map_err(|_| Error::contract("blob rank too large"))?;
            if b.shape.iter().product::<usize>() != b.data.len() {
                return Err(Error::dim(format!("blob {}", b.name), b.shape.iter().product(), b.data.len()));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(rank);
            for &d in &b.shape {
                let d = u32::try_from(d).map_err(|_| Error::contract("blob dimension exceeds u32"))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
            if bytes.len() - pos < n {
                return Err(Error::format(pos as u64, format!("truncated {what}")));
            }
            let at = pos;
            pos += n;
            Ok((at, &bytes[at..at + n]))
        };
        let (_, magic) = take(5, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "bad magic: expected \"CVCK1\""));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
        let (_, len) = take(4, "manifest length")?;
        let (at, manifest) = take(u32_at(len), "manifest")?;
        let manifest: Manifest =
            serde_json::from_slice(manifest).map_err(|e| Error::format(at as u64, format!("manifest: {e}")))?;
        let (_, count) = take(4, "blob count")?;
        let mut blobs = Vec::with_capacity(u32_at(count).min(1 << 16));
        for _ in 0..u32_at(count) {
            let (at, len) = take(2, "blob name length")?;
            let (_, name) = take(u16::from_le_bytes(len.try_into().unwrap()) as usize, "blob name")?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| Error::format(at as u64, "blob name is not UTF-8"))?;
            let (_, rank) = take(1, "blob rank")?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(u32_at(take(4, "blob shape")?.1));
            }
            let n = shape
                .iter()
                .try_fold(4usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format(at as u64, "blob size overflows"))?;
            let (_, data) = take(n, "blob data")?;
            let data = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            blobs.push(Blob { name, shape, data });
        }
        if pos != bytes.len() {
            return Err(Error::format(pos as u64, "trailing bytes after last blob"));
        }
        Ok(Self { manifest, blobs })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::language_rng;

    fn sample() -> Checkpoint {
        Checkpoint {
            manifest: Manifest {
                architecture: "conv 3x3 1->2\nfc out\n".into(),
                geometry: "1x5x5".into(),
                multiscale: "1S/2".into(),
                languages: vec![(0, 3), (2, 4)],
                optimizer: OptimizerKind::ADADELTA,
                optimizer_steps: 7,
                step: 7,
                finetuning: false,
                seed: 9,
                samplers: vec![SamplerEntry {
                    language: 0,
                    rng: RngState::capture(&language_rng(9, 0)),
                }],
            },
            blobs: vec![
                Blob { name: "a".into(), shape: vec![2, 3], data: vec![1.0, -2.5, 3.0, f32::MIN_POSITIVE, 0.0, -0.0] },
                Blob { name: "b".into(), shape: vec![1], data: vec![7.0] },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.manifest, c.manifest);
        for (a, b) in back.blobs.iter().zip(&c.blobs) {
            assert_eq!(a.shape, b.shape);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.data), bits(&b.data));
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_input_is_a_format_error() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        let mut bad = bytes.clone();
        bad[4] = b'0';
        assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("CVCK1"));
    }
}
