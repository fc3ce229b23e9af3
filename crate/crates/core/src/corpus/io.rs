use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, Label, Quadruplet, Split};
use crate::error::{Error, Result};

/// Source file layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv { delimiter: char },
}

/// Maps source fields (JSON keys or CSV headers) onto quadruplet fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(flatten)]
    pub format: Format,
    pub premise: String,
    pub hypothesis: String,
    pub label: String,
    pub explanations: Vec<String>,
}

impl Schema {
    /// The native JSONL layout: `explanation` for train, `explanation_1..3` otherwise.
    pub fn native(split: Split) -> Self {
        let explanations = match split {
            Split::Train => vec!["explanation".to_owned()],
            Split::Val | Split::Test => (1..=3).map(|i| format!("explanation_{i}")).collect(),
        };
        Self {
            format: Format::Jsonl,
            premise: "premise".into(),
            hypothesis: "hypothesis".into(),
            label: "label".into(),
            explanations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based record number (line for JSONL, data row for CSV).
    pub record: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub records: Vec<Quadruplet>,
    pub rejected: Vec<Rejection>,
}

/// Reads a quadruplet file. Invalid records are skipped with a diagnostic; more
/// than 1% rejected fails the whole load.
pub fn load_quadruplets(path: impl AsRef<Path>, split: Split, schema: &Schema) -> Result<Loaded> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = match &schema.format {
        Format::Jsonl => read_jsonl(&text),
        Format::Csv { delimiter } => read_csv(&text, *delimiter)?,
    };

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (record, fields) in raw {
        let built = fields.and_then(|f| build(&f, schema, split));
        match built {
            Ok(q) => records.push(q),
            Err(message) => rejected.push(Rejection { record, message }),
        }
    }

    let total = records.len() + rejected.len();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    if rejected.len() * 100 > total {
        let first = rejected
            .first()
            .map(|r| format!("record {}: {}", r.record, r.message))
            .unwrap_or_default();
        return Err(Error::TooManyRejected {
            rejected: rejected.len(),
            total,
            first,
        });
    }
    Ok(Loaded { records, rejected })
}

type Fields = std::result::Result<HashMap<String, String>, String>;

fn read_jsonl(text: &str) -> Vec<(usize, Fields)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let parsed = serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(line)
                .map_err(|e| format!("invalid json: {e}"))
                .map(|obj| {
                    obj.into_iter()
                        .filter_map(|(k, v)| match v {
                            serde_json::Value::String(s) => Some((k, s)),
                            _ => None,
                        })
                        .collect()
                });
            (i + 1, parsed)
        })
        .collect()
}

fn read_csv(text: &str, delimiter: char) -> Result<Vec<(usize, Fields)>> {
    let delim = u8::try_from(u32::from(delimiter))
        .map_err(|_| Error::Config(format!("non-ascii csv delimiter {delimiter:?}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("csv header: {e}")))?
        .clone();
    Ok(reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let fields = rec.map_err(|e| format!("csv: {e}")).map(|r| {
                headers
                    .iter()
                    .zip(r.iter())
                    .map(|(h, v)| (h.to_owned(), v.to_owned()))
                    .collect()
            });
            (i + 1, fields)
        })
        .collect())
}

fn build(fields: &HashMap<String, String>, schema: &Schema, split: Split) -> std::result::Result<Quadruplet, String> {
    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| format!("missing field {key:?}"))
    };
    let label: Label = get(&schema.label)?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let explanations = schema
        .explanations
        .iter()
        .filter_map(|k| fields.get(k))
        .map(|s| tokenize(s))
        .collect();
    let q = Quadruplet {
        premise: tokenize(get(&schema.premise)?),
        hypothesis: tokenize(get(&schema.hypothesis)?),
        label,
        explanations,
    };
    q.validate(split)?;
    Ok(q)
}
