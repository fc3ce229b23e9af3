use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Human judgement for one generated explanation: which required arguments
/// each of three annotators found mentioned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub example_index: usize,
    pub required_args: Vec<String>,
    pub annotator_1: Vec<String>,
    pub annotator_2: Vec<String>,
    pub annotator_3: Vec<String>,
}

impl Annotation {
    /// Per-annotator `k/n` partial scores.
    pub fn annotator_scores(&self) -> Result<[f64; 3]> {
        let required: BTreeSet<&str> = self.required_args.iter().map(String::as_str).collect();
        if required.is_empty() {
            return Err(Error::Annotation(format!(
                "example {} has no required arguments",
                self.example_index
            )));
        }
        let score = |mentions: &[String]| -> Result<f64> {
            let mut seen = BTreeSet::new();
            for m in mentions {
                if !required.contains(m.as_str()) {
                    return Err(Error::Annotation(format!(
                        "example {}: `{m}` is not a required argument",
                        self.example_index
                    )));
                }
                seen.insert(m.as_str());
            }
            Ok(seen.len() as f64 / required.len() as f64)
        };
        Ok([
            score(&self.annotator_1)?,
            score(&self.annotator_2)?,
            score(&self.annotator_3)?,
        ])
    }

    pub fn score(&self) -> Result<f64> {
        Ok(self.annotator_scores()?.iter().sum::<f64>() / 3.0)
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let a: Annotation = serde_json::from_str(&line)
            .map_err(|e| Error::Annotation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(a);
    }
    Ok(out)
}

/// Mean example score over examples `0..k`, on a 0–100 scale.
pub fn correct_at_k(annotations: &[Annotation], k: usize) -> Result<f64> {
    let by_index: BTreeMap<usize, &Annotation> = annotations.iter().map(|a| (a.example_index, a)).collect();
    if by_index.len() != annotations.len() {
        return Err(Error::Annotation("duplicate example_index".into()));
    }
    if k == 0 {
        return Err(Error::Annotation("k must be positive".into()));
    }
    let mut total = 0.0;
    for i in 0..k {
        let a = by_index
            .get(&i)
            .ok_or_else(|| Error::Annotation(format!("no annotation for example {i}")))?;
        total += a.score()?;
    }
    Ok(100.0 * total / k as f64)
}
