//! Model files: magic, format version, a JSON manifest, then one named,
//! length-prefixed block of little-endian `f64` values per parameter array,
//! each followed by a CRC32 of the block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Network, ParameterSet};
use crate::output::OutputStrategy;

pub const MAGIC: &[u8; 8] = b"NNLMPARM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub strategy: OutputStrategy,
    pub vocab_hash: String,
    pub seed: u64,
    /// Run configuration the model was trained with.
    pub config: String,
    /// Whether the model reads sentences right to left.
    pub reversed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelArtifact {
    pub manifest: Manifest,
    pub network: Network<f64>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Artifact(format!("file ends inside {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| Error::Artifact(format!("{what} length overflows")))
    }
}

impl ModelArtifact {
    pub fn new(network: Network<f64>, vocab: &Vocabulary, seed: u64, config: String, reversed: bool) -> Result<Self> {
        if vocab.len() != network.spec.vocab_size {
            return Err(Error::shape("ModelArtifact::new", format!("model vocabulary {}", network.spec.vocab_size), format!("vocabulary of {}", vocab.len())));
        }
        Ok(ModelArtifact {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                spec: network.spec.clone(),
                strategy: network.strategy.clone(),
                vocab_hash: vocab.hash(),
                seed,
                config,
                reversed,
            },
            network,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        let slots = self.network.slots();
        out.extend_from_slice(&(slots.len() as u32).to_le_bytes());
        for s in slots {
            let start = out.len();
            out.extend_from_slice(&(s.name.len() as u64).to_le_bytes());
            out.extend_from_slice(s.name.as_bytes());
            out.extend_from_slice(&(s.rows as u64).to_le_bytes());
            out.extend_from_slice(&(s.cols as u64).to_le_bytes());
            for v in s.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let crc = crc32fast::hash(&out[start..]);
            out.extend_from_slice(&crc.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Artifact("not a model file (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Artifact(format!("format version {version} is not supported (expected {FORMAT_VERSION})")));
        }
        let n = r.len("manifest")?;
        let manifest: Manifest = serde_json::from_slice(r.take(n, "manifest")?).map_err(|e| Error::Artifact(format!("manifest: {e}")))?;
        if manifest.strategy.vocab_size() != manifest.spec.vocab_size {
            return Err(Error::Artifact("manifest output layer and model disagree on vocabulary size".into()));
        }
        manifest.spec.validate()?;
        let mut network = Network::zeros(manifest.spec.clone(), manifest.strategy.clone())?;
        let count = r.u32("block count")? as usize;
        let mut slots = network.slots_mut();
        if count != slots.len() {
            return Err(Error::Artifact(format!("{count} parameter blocks, model expects {}", slots.len())));
        }
        for slot in slots.iter_mut() {
            let start = r.pos;
            let len = r.len("block name")?;
            let name = r.take(len, "block name")?;
            if name != slot.name.as_bytes() {
                return Err(Error::Artifact(format!("block `{}` where `{}` was expected", String::from_utf8_lossy(name), slot.name)));
            }
            let (rows, cols) = (r.len("block shape")?, r.len("block shape")?);
            if (rows, cols) != (slot.rows, slot.cols) {
                return Err(Error::Artifact(format!("block `{}` is {rows}x{cols}, model expects {}x{}", slot.name, slot.rows, slot.cols)));
            }
            let data = r.take(slot.data.len() * 8, "block data")?;
            let crc = crc32fast::hash(&bytes[start..r.pos]);
            if r.u32("checksum")? != crc {
                return Err(Error::Artifact(format!("checksum mismatch in block `{}`; the file is corrupt", slot.name)));
            }
            for (d, c) in slot.data.iter_mut().zip(data.chunks_exact(8)) {
                *d = f64::from_le_bytes(c.try_into().unwrap());
            }
        }
        drop(slots);
        if r.pos != bytes.len() {
            return Err(Error::Artifact(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(ModelArtifact { manifest, network })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let h = vocab.hash();
        if h != self.manifest.vocab_hash {
            return Err(Error::Artifact(format!(
                "vocabulary hash {h} does not match the model's {}; the model was trained with a different vocabulary",
                self.manifest.vocab_hash
            )));
        }
        Ok(())
    }

    /// Loads and rejects the model unless `vocab` is the one it was trained with.
    pub fn load_checked(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let a = Self::load(path)?;
        a.check_vocabulary(vocab)?;
        Ok(a)
    }
}
