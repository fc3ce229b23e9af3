//! Checkpoint loading across scalar types, and inference inputs.

use std::io::BufRead;
use std::path::Path;

use anyhow::{Context, Result};
use interaction_core::checkpoint::{stored_dtype, Checkpoint};
use interaction_core::corpus::{tokenize, Vocabulary};
use interaction_core::{Error, Model};
use serde::Deserialize;

pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

/// Runs `$body` with `$m` bound to the concrete model.
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            $crate::models::AnyModel::F32($m) => $body,
            $crate::models::AnyModel::F64($m) => $body,
        }
    };
}
pub(crate) use with_model;

impl AnyModel {
    pub fn kind(&self) -> interaction_core::ModelKind {
        with_model!(self, m => m.kind())
    }
}

fn as_checkpoint_error(e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Json(_) => Error::Checkpoint(e.to_string()),
        e => e,
    }
}

fn open<T: interaction_core::scalar::Scalar>(path: &Path, vocab: &Vocabulary) -> Result<(Model<T>, Option<u64>)> {
    let ckpt = Checkpoint::<T>::load(path).map_err(as_checkpoint_error)?;
    ckpt.check_vocab(&vocab.hash())?;
    let seed = ckpt.seed;
    Ok((ckpt.into_model()?, seed))
}

/// Loads a checkpoint of either scalar type, checking it against `vocab`.
pub fn load_model(path: &Path, vocab: &Vocabulary) -> Result<(AnyModel, Option<u64>)> {
    let ctx = || format!("loading checkpoint {}", path.display());
    let dtype = stored_dtype(path).map_err(as_checkpoint_error).with_context(ctx)?;
    match dtype.as_str() {
        "f32" => open::<f32>(path, vocab).map(|(m, s)| (AnyModel::F32(m), s)),
        "f64" => open::<f64>(path, vocab).map(|(m, s)| (AnyModel::F64(m), s)),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other}")).into()),
    }
    .with_context(ctx)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

/// One inference request.
#[derive(Clone, Debug, Deserialize)]
pub struct Pair {
    pub premise: Option<String>,
    pub hypothesis: Option<String>,
}

/// Encoded request; absent or blank fields stay `None`.
pub struct EncodedPair {
    pub raw: Pair,
    pub premise: Option<Vec<u32>>,
    pub hypothesis: Option<Vec<u32>>,
}

/// Reads JSONL pairs from `path`, or stdin when `None`.
pub fn read_pairs(path: Option<&Path>, vocab: &Vocabulary, max_len: usize) -> Result<Vec<EncodedPair>> {
    let reader: Box<dyn BufRead> = match path {
        Some(p) => Box::new(std::io::BufReader::new(
            std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(std::io::stdin().lock()),
    };
    let encode = |s: Option<String>| {
        let tokens = tokenize(s.as_deref().unwrap_or(""));
        (!tokens.is_empty()).then(|| vocab.encode(&tokens, max_len))
    };
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.context("reading input")?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: Pair = serde_json::from_str(&line)
            .map_err(|e| Error::Record {
                location: format!("input line {}", i + 1),
                message: e.to_string(),
            })?;
        out.push(EncodedPair {
            premise: encode(pair.premise.clone()),
            hypothesis: encode(pair.hypothesis.clone()),
            raw: pair,
        });
    }
    Ok(out)
}

/// Detokenized text of generated ids.
pub fn text(vocab: &Vocabulary, ids: &[u32]) -> String {
    vocab.decode(ids).join(" ")
}
