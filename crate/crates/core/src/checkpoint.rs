//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every parameter tensor in declaration order as little-endian
//! scalars, followed by the Adam moments when present.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, Model};
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamStore;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"INTXCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerInfo {
    config: AdamConfig,
    step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    vocab_hash: String,
    #[serde(default)]
    seed: Option<u64>,
    dtype: String,
    tensors: Vec<TensorInfo>,
    optimizer: Option<OptimizerInfo>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub arch: Architecture,
    pub vocab_hash: String,
    /// Training seed, when known.
    pub seed: Option<u64>,
    pub params: ParamStore<T>,
    pub optimizer: Option<Adam<T>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            architecture: self.arch.clone(),
            vocab_hash: self.vocab_hash.clone(),
            seed: self.seed,
            dtype: T::DTYPE.to_owned(),
            tensors: self
                .params
                .iter()
                .map(|(name, a)| TensorInfo {
                    name: name.to_owned(),
                    rows: a.nrows(),
                    cols: a.ncols(),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerInfo {
                config: o.config.clone(),
                step: o.step,
            }),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 20 + self.params.scalar_count() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut write = |a: &Array2<T>| {
            for &v in a.iter() {
                v.write_le(&mut out);
            }
        };
        for (_, a) in self.params.iter() {
            write(a);
        }
        if let Some(o) = &self.optimizer {
            o.m.iter().chain(&o.v).for_each(&mut write);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes)?;
        if header.0.dtype != T::DTYPE {
            return Err(bad(format!("checkpoint holds {} values, expected {}", header.0.dtype, T::DTYPE)));
        }
        let (h, mut pos) = header;
        let mut read = |rows: usize, cols: usize| -> Result<Array2<T>> {
            let n = rows * cols * T::BYTES;
            let chunk = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated tensor data"))?;
            pos += n;
            let values = chunk.chunks_exact(T::BYTES).map(T::read_le).collect();
            Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(e.to_string()))
        };
        let mut params = ParamStore::new();
        for t in &h.tensors {
            params.register(t.name.clone(), read(t.rows, t.cols)?);
        }
        let optimizer = match &h.optimizer {
            None => None,
            Some(info) => {
                let mut m = Vec::with_capacity(h.tensors.len());
                let mut v = Vec::with_capacity(h.tensors.len());
                for t in &h.tensors {
                    m.push(read(t.rows, t.cols)?);
                }
                for t in &h.tensors {
                    v.push(read(t.rows, t.cols)?);
                }
                Some(Adam {
                    config: info.config.clone(),
                    step: info.step,
                    m,
                    v,
                })
            }
        };
        if pos != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            arch: h.architecture,
            vocab_hash: h.vocab_hash,
            seed: h.seed,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the checkpoint was written against `vocab_hash`.
    pub fn check_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::VocabMismatch {
                checkpoint: self.vocab_hash.clone(),
                vocabulary: vocab_hash.to_owned(),
            });
        }
        Ok(())
    }

    pub fn into_model(self) -> Result<Model<T>> {
        Model::with_params(self.arch, self.params)
    }
}

fn read_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("bad header: {e}")))?;
    Ok((header, 20 + len))
}

/// Scalar type tag stored in a checkpoint file.
pub fn stored_dtype(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(read_header(&bytes)?.0.dtype)
}
