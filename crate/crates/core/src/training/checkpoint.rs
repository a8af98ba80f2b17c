//! Self-contained binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CIDG"  u32 version  u64 header_len  header (UTF-8)
//! repeated until EOF:
//!   u32 name_len  name  u32 rank  u32 dims[rank]  f32 data[prod(dims)]
//! ```
//!
//! The header is one JSON line with the model config, training config and
//! metadata, followed by the vocabulary, one token per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::model::{ModelConfig, ModelParams};
use crate::tokenizer::Vocabulary;

pub const MAGIC: &[u8; 4] = b"CIDG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs_completed: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams<f32>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    metadata: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header =
            Header { model_config: self.model_config, train_config: self.train_config.clone(), metadata: self.meta };
        let mut blob = serde_json::to_string(&header).expect("header serializes");
        blob.push('\n');
        blob.push_str(&self.vocab.to_text());

        let mut out = Vec::with_capacity(16 + blob.len() + 4 * self.params.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(blob.as_bytes());
        for (spec, t) in self.params.layout.specs.iter().zip(&self.params.tensors) {
            out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
            out.extend_from_slice(spec.name.as_bytes());
            out.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
            for &d in &spec.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(TrainError::NotACheckpoint);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(TrainError::UnsupportedVersion(version));
        }
        let len = r.u64()? as usize;
        let blob = std::str::from_utf8(r.take(len)?).map_err(|e| TrainError::BadHeader(e.to_string()))?;
        let (json, vocab_text) = blob.split_once('\n').unwrap_or((blob, ""));
        let header: Header = serde_json::from_str(json).map_err(|e| TrainError::BadHeader(e.to_string()))?;
        let vocab = Vocabulary::from_text(vocab_text).map_err(|e| TrainError::BadHeader(e.to_string()))?;
        let cfg = header.model_config;
        cfg.validate().map_err(|e| TrainError::Inconsistent(e.to_string()))?;
        if cfg.vocab_size != vocab.len() {
            return Err(TrainError::Inconsistent(format!(
                "model vocab_size {} but the vocabulary has {} tokens",
                cfg.vocab_size,
                vocab.len()
            )));
        }

        let mut params = ModelParams::<f32>::zeros(cfg);
        let layout = params.layout.clone();
        let mut next = 0;
        while !r.at_end() {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let spec = layout
                .specs
                .get(next)
                .ok_or_else(|| TrainError::Inconsistent(format!("unexpected extra tensor {name}")))?;
            if spec.name != name || spec.shape != shape {
                return Err(TrainError::Inconsistent(format!(
                    "tensor {next}: expected {} {:?}, found {name} {shape:?}",
                    spec.name, spec.shape
                )));
            }
            let raw = r.take(4 * spec.numel())?;
            params.tensors[next] =
                raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            next += 1;
        }
        if next != layout.specs.len() {
            return Err(TrainError::Truncated);
        }
        Ok(Checkpoint { model_config: cfg, train_config: header.train_config, vocab, params, meta: header.metadata })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).ok_or(TrainError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(TrainError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    let io = |source| TrainError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&ckpt.to_bytes()).map_err(io)?;
    f.sync_all().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io { path: path.display().to_string(), source })?;
    Checkpoint::from_bytes(&bytes)
}
