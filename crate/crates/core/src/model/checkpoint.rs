//! Binary checkpoint format.
//!
//! ```text
//! magic   b"HLTC"
//! version u32 LE
//! config  u64 LE length, then JSON {"model": ModelConfig, "vocab": [words]}
//! count   u32 LE number of tensors
//! tensor  u32 LE name length, name (UTF-8), u8 rank, rank x u64 LE dims,
//!         row-major f64 LE values
//! trailer 32-byte SHA-256 of every preceding byte
//! ```
//!
//! The trailer is verified before anything is decoded, so a truncated or
//! corrupted file never yields a partially loaded model.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::treebank::Vocabulary;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HLTC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    vocab: Vec<String>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!("unexpected end of data at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflows usize".into()))
    }
}

/// Decoded but not yet applied checkpoint.
struct Archive {
    header: Header,
    tensors: Vec<(String, Tensor)>,
}

fn decode(bytes: &[u8]) -> Result<Archive> {
    if bytes.len() < 4 + 4 + 32 {
        return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::Checkpoint("checksum mismatch (truncated or corrupted file)".into()));
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let n = r.len()?;
    let header: Header = serde_json::from_slice(r.take(n)?)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name:?} is too large")))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, values).map_err(|e| Error::Checkpoint(format!("tensor {name:?}: {e}")))?;
        tensors.push((name, t));
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
    }
    Ok(Archive { header, tensors })
}

impl Model {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.config.clone(),
            vocab: self.vocab.words().to_vec(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for id in self.params.ids() {
            let name = self.params.name(id).as_bytes();
            let t = self.params.get(id);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        Ok(out)
    }

    /// Rebuilds a model from the configuration and tensors in `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let archive = decode(bytes)?;
        let vocab = Vocabulary::from_words(archive.header.vocab.clone())?;
        let mut model = Model::new(archive.header.model.clone(), vocab, None, &mut ChaCha8Rng::seed_from_u64(0))?;
        model.apply(archive)?;
        Ok(model)
    }

    /// Overwrites this model's tensors with those in `bytes`. Every tensor
    /// must match by name and shape; nothing is modified on error.
    pub fn restore_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let archive = decode(bytes)?;
        if archive.header.vocab != self.vocab.words() {
            return Err(Error::Checkpoint("vocabulary differs from the checkpoint's".into()));
        }
        self.apply(archive)
    }

    fn apply(&mut self, archive: Archive) -> Result<()> {
        let mut found = vec![false; self.params.len()];
        let mut plan = Vec::with_capacity(archive.tensors.len());
        for (name, t) in archive.tensors {
            let id = self
                .params
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name:?}")))?;
            let want = self.params.get(id).shape();
            if want != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} has shape {:?}, model expects {want:?}",
                    t.shape()
                )));
            }
            found[id.index()] = true;
            plan.push((id, t));
        }
        if let Some(missing) = self.params.ids().find(|id| !found[id.index()]) {
            return Err(Error::Checkpoint(format!(
                "checkpoint lacks tensor {:?}",
                self.params.name(missing)
            )));
        }
        for (id, t) in plan {
            self.params.get_mut(id).values_mut().copy_from_slice(t.values());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Model::from_bytes(&bytes)
    }

    pub fn restore(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        self.restore_bytes(&bytes)
    }
}
