//! Quadruplet datasets: ingestion, vocabulary, encoding and batching.

mod batch;
mod io;
mod synth;
mod tokenize;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{encode_corpus, make_batches, sequential_batches, Batch, EncodedExample, PaddedSeqs};
pub use io::{load_quadruplets, Format, Loaded, Rejection, Schema};
pub use synth::{synth_corpus, SynthOptions, CUES, VERB_GROUPS};
pub use tokenize::tokenize;
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Contradiction,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Contradiction, Label::Neutral];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Label> {
        Self::ALL.get(id).copied()
    }

    pub fn word(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "entailment" => Ok(Label::Entailment),
            "contradiction" => Ok(Label::Contradiction),
            "neutral" => Ok(Label::Neutral),
            other => Err(Error::Record {
                location: "label".into(),
                message: format!("unknown label word {other:?}"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// Explanations per record: one for training, three references otherwise.
    pub fn explanation_count(self) -> usize {
        match self {
            Split::Train => 1,
            Split::Val | Split::Test => 3,
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

pub type Tokens = Vec<String>;

/// One record: premise, hypothesis, label and its explanation(s).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadruplet {
    pub premise: Tokens,
    pub hypothesis: Tokens,
    pub label: Label,
    pub explanations: Vec<Tokens>,
}

impl Quadruplet {
    /// Checks the record invariants for `split`.
    pub fn validate(&self, split: Split) -> std::result::Result<(), String> {
        if self.premise.is_empty() {
            return Err("empty premise".into());
        }
        if self.hypothesis.is_empty() {
            return Err("empty hypothesis".into());
        }
        let want = split.explanation_count();
        if self.explanations.len() != want {
            return Err(format!(
                "expected {want} explanation(s) for {split:?}, found {}",
                self.explanations.len()
            ));
        }
        if let Some(i) = self.explanations.iter().position(Vec::is_empty) {
            return Err(format!("explanation {} is empty", i + 1));
        }
        Ok(())
    }

    /// All token sequences of the record, in field order.
    pub fn sequences(&self) -> impl Iterator<Item = &Tokens> {
        [&self.premise, &self.hypothesis]
            .into_iter()
            .chain(self.explanations.iter())
    }
}
