//! Run configuration: TOML sections layered over a named profile.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use interaction_core::concvae::{CvaeConfig, LatentSource};
use interaction_core::corpus::{Schema, Split};
use interaction_core::evaluate::EvalOptions;
use interaction_core::metrics::Smoothing;
use interaction_core::optim::AdamConfig;
use interaction_core::train::TrainConfig;
use interaction_core::transformer::ModelConfig;
use interaction_core::{Architecture, ModelKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 6 layers, hidden 512, lr 1e-5.
    Paper,
    /// 2 layers, hidden 64, lr 1e-3.
    Toy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_pos: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub abs_diff: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub dtype: Dtype,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub max_len: usize,
    pub min_freq: usize,
    /// Field mapping for the training file; native JSONL when absent.
    pub train_schema: Option<Schema>,
    /// Field mapping for validation and test files.
    pub eval_schema: Option<Schema>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub bleu_smoothing: Smoothing,
    pub latent_source: LatentSource,
    pub annotations: Option<PathBuf>,
    pub correct_k: usize,
    pub max_decode_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub model: ModelSection,
    pub cvae: CvaeConfig,
    pub training: TrainingSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let base = match profile {
            Profile::Paper => ModelConfig::base(0),
            Profile::Toy => ModelConfig::toy(0),
        };
        Self {
            profile,
            model: ModelSection {
                layers: base.layers,
                hidden: base.hidden,
                heads: base.heads,
                ffn: base.ffn,
                max_pos: base.max_pos,
                dropout: base.dropout,
                lambda: 1.0,
                abs_diff: false,
            },
            cvae: CvaeConfig::default(),
            training: TrainingSection {
                lr: match profile {
                    Profile::Paper => 1e-5,
                    Profile::Toy => 1e-3,
                },
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                batch_size: 16,
                epochs: 10,
                seeds: vec![1000, 2000, 3000],
                dtype: Dtype::F32,
            },
            data: DataSection {
                train: None,
                val: None,
                test: None,
                max_len: 25,
                min_freq: match profile {
                    Profile::Paper => 3,
                    Profile::Toy => 1,
                },
                train_schema: None,
                eval_schema: None,
            },
            eval: EvalSection {
                bleu_smoothing: Smoothing::None,
                latent_source: LatentSource::PriorMean,
                annotations: None,
                correct_k: 100,
                max_decode_len: 25,
            },
        }
    }

    /// Parses TOML text; keys absent from it take the values of its `profile`
    /// (paper when unset).
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let profile = match user.get("profile") {
            None => Profile::Paper,
            Some(v) => v.clone().try_into().context("unknown profile")?,
        };
        let mut merged = toml::Table::try_from(Self::for_profile(profile))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into().context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, making data paths absolute against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.train,
            &mut cfg.data.val,
            &mut cfg.data.test,
            &mut cfg.eval.annotations,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = std::path::absolute(dir.join(&*p))?;
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.training.seeds.is_empty() {
            bail!("training.seeds must not be empty");
        }
        if self.data.max_len < 3 || self.data.max_len > self.model.max_pos {
            bail!(
                "data.max_len must lie in 3..={} (model.max_pos), got {}",
                self.model.max_pos,
                self.data.max_len
            );
        }
        if self.data.min_freq == 0 {
            bail!("data.min_freq must be at least 1");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Hex SHA-256 of the echoed TOML.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            ffn: m.ffn,
            max_pos: m.max_pos,
            vocab_size,
            dropout: m.dropout,
        }
    }

    pub fn architecture(&self, kind: ModelKind, vocab_size: usize) -> Result<Architecture> {
        let mut arch = Architecture::new(kind, self.model_config(vocab_size));
        arch.cvae = self.cvae.clone();
        arch.lambda = self.model.lambda;
        arch.abs_diff = self.model.abs_diff;
        arch.validate()?;
        Ok(arch)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            adam: AdamConfig {
                lr: t.lr,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            batch_size: self.training.batch_size,
            max_len: self.eval.max_decode_len,
            smoothing: self.eval.bleu_smoothing,
            latent_source: self.eval.latent_source,
        }
    }

    pub fn schema(&self, split: Split) -> Schema {
        let given = match split {
            Split::Train => &self.data.train_schema,
            Split::Val | Split::Test => &self.data.eval_schema,
        };
        given.clone().unwrap_or_else(|| Schema::native(split))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
