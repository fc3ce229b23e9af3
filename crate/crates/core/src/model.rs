//! Every trainable model kind behind one interface.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::classifiers::{classification_loss, Classifier, ClassifierKind};
use crate::concvae::{Cvae, CvaeConfig, Direction, LatentSource, Noise, Pooling};
use crate::corpus::{Batch, EncodedExample};
use crate::error::{Error, Result};
use crate::generation::argmax;
use crate::interaction::{Interaction, PredictorVariant};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::seq2seq::{GenerationMode, Seq2Seq};
use crate::transformer::{Init, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Separate,
    Mixture,
    Agnostic,
    Seq2seqFull,
    Seq2seqAgnostic,
    Cvae,
    Concvae,
    InteractionM1,
    InteractionM2,
    InteractionM3,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        Self::Separate,
        Self::Mixture,
        Self::Agnostic,
        Self::Seq2seqFull,
        Self::Seq2seqAgnostic,
        Self::Cvae,
        Self::Concvae,
        Self::InteractionM1,
        Self::InteractionM2,
        Self::InteractionM3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Separate => "separate",
            Self::Mixture => "mixture",
            Self::Agnostic => "agnostic",
            Self::Seq2seqFull => "seq2seq_full",
            Self::Seq2seqAgnostic => "seq2seq_agnostic",
            Self::Cvae => "cvae",
            Self::Concvae => "concvae",
            Self::InteractionM1 => "interaction_m1",
            Self::InteractionM2 => "interaction_m2",
            Self::InteractionM3 => "interaction_m3",
        }
    }

    pub fn classifies(self) -> bool {
        matches!(
            self,
            Self::Separate | Self::Mixture | Self::Agnostic | Self::InteractionM1 | Self::InteractionM2 | Self::InteractionM3
        )
    }

    pub fn generates(self) -> bool {
        !matches!(self, Self::Separate | Self::Mixture | Self::Agnostic)
    }

    /// Has a latent space to sweep.
    pub fn is_latent(self) -> bool {
        matches!(
            self,
            Self::Cvae | Self::Concvae | Self::InteractionM1 | Self::InteractionM2 | Self::InteractionM3
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown model kind `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub model: ModelConfig,
    pub cvae: CvaeConfig,
    /// Weight of the label cross-entropy in the joint loss.
    pub lambda: f64,
    /// `|u − v|` instead of `u − v` in the separate classifier.
    pub abs_diff: bool,
}

impl Architecture {
    pub fn new(kind: ModelKind, model: ModelConfig) -> Self {
        Self {
            kind,
            model,
            cvae: CvaeConfig::default(),
            lambda: 1.0,
            abs_diff: false,
        }
    }

    /// The CVAE settings with pooling fixed by the kind where it is implied.
    pub fn effective_cvae(&self) -> CvaeConfig {
        let mut c = self.cvae.clone();
        match self.kind {
            ModelKind::Cvae => c.pooling = Pooling::Bos,
            ModelKind::Concvae => c.pooling = Pooling::Concoder,
            _ => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.cvae.latent_dim == Some(0) {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if self.cvae.beta < 0.0 || self.cvae.kl_warmup_epochs < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config("beta, kl_warmup_epochs and lambda must be non-negative".into()));
        }
        Ok(())
    }

    /// Closed-form count of trainable scalars.
    pub fn param_count(&self) -> usize {
        let cfg = &self.model;
        match self.kind {
            ModelKind::Separate => Classifier::param_count(ClassifierKind::Separate, cfg),
            ModelKind::Mixture => Classifier::param_count(ClassifierKind::Mixture, cfg),
            ModelKind::Agnostic => Classifier::param_count(ClassifierKind::PremiseAgnostic, cfg),
            ModelKind::Seq2seqFull | ModelKind::Seq2seqAgnostic => Seq2Seq::param_count(cfg),
            ModelKind::Cvae | ModelKind::Concvae => Cvae::param_count(cfg, &self.effective_cvae()),
            ModelKind::InteractionM1 => Interaction::param_count(cfg, &self.cvae, PredictorVariant::M1),
            ModelKind::InteractionM2 => Interaction::param_count(cfg, &self.cvae, PredictorVariant::M2),
            ModelKind::InteractionM3 => Interaction::param_count(cfg, &self.cvae, PredictorVariant::M3),
        }
    }

    fn build<T: Scalar>(&self, init: &mut Init<'_, T>) -> Network {
        let cfg = &self.model;
        let classifier = |init: &mut Init<'_, T>, k| Network::Classifier(Classifier::new(init, k, cfg, self.abs_diff));
        let interaction =
            |init: &mut Init<'_, T>, v| Network::Interaction(Interaction::new(init, cfg, &self.cvae, v, self.lambda));
        match self.kind {
            ModelKind::Separate => classifier(init, ClassifierKind::Separate),
            ModelKind::Mixture => classifier(init, ClassifierKind::Mixture),
            ModelKind::Agnostic => classifier(init, ClassifierKind::PremiseAgnostic),
            ModelKind::Seq2seqFull => Network::Seq2Seq(Seq2Seq::new(init, GenerationMode::Full, cfg)),
            ModelKind::Seq2seqAgnostic => Network::Seq2Seq(Seq2Seq::new(init, GenerationMode::Agnostic, cfg)),
            ModelKind::Cvae | ModelKind::Concvae => Network::Cvae(Cvae::new(init, cfg, &self.effective_cvae())),
            ModelKind::InteractionM1 => interaction(init, PredictorVariant::M1),
            ModelKind::InteractionM2 => interaction(init, PredictorVariant::M2),
            ModelKind::InteractionM3 => interaction(init, PredictorVariant::M3),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Network {
    Classifier(Classifier),
    Seq2Seq(Seq2Seq),
    Cvae(Cvae),
    Interaction(Interaction),
}

/// Graph handles of one batch's loss and its parts.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub reconstruction: Option<Var>,
    pub kl: Option<Var>,
    pub classification: Option<Var>,
}

/// Step-one style output for a single input.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prediction {
    pub label: Option<usize>,
    pub explanation: Option<Vec<u32>>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub arch: Architecture,
    pub params: ParamStore<T>,
    pub net: Network,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = arch.build(&mut Init::new(&mut params, &mut rng));
        Ok(Self { arch, params, net })
    }

    /// Wraps loaded parameters, checking names and shapes against the architecture.
    pub fn with_params(arch: Architecture, params: ParamStore<T>) -> Result<Self> {
        let fresh = Self::new(arch, 0)?;
        if fresh.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for ((n1, a), (n2, b)) in fresh.params.iter().zip(params.iter()) {
            if n1 != n2 || a.dim() != b.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected {n1} {:?}, found {n2} {:?}",
                    a.dim(),
                    b.dim()
                )));
            }
        }
        Ok(Self {
            arch: fresh.arch,
            params,
            net: fresh.net,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn count_params(&self) -> usize {
        self.params.scalar_count()
    }

    /// Batch loss. `beta` weights the KL term of latent models.
    pub fn loss(&self, g: &mut Graph<'_, T>, batch: &Batch, noise: &mut Noise, beta: f64) -> Result<LossTerms> {
        match &self.net {
            Network::Classifier(c) => {
                let logits = c.batch_logits(g, batch)?;
                let ce = classification_loss(g, logits, &batch.labels);
                Ok(LossTerms {
                    total: ce,
                    reconstruction: None,
                    kl: None,
                    classification: Some(ce),
                })
            }
            Network::Seq2Seq(s) => {
                let l = s.loss(g, batch)?;
                Ok(LossTerms {
                    total: l,
                    reconstruction: Some(l),
                    kl: None,
                    classification: None,
                })
            }
            Network::Cvae(c) => {
                let e = c.elbo(g, batch, noise)?;
                let kl = g.scale(e.kl, T::c(beta));
                Ok(LossTerms {
                    total: g.add(e.reconstruction, kl),
                    reconstruction: Some(e.reconstruction),
                    kl: Some(e.kl),
                    classification: None,
                })
            }
            Network::Interaction(m) => {
                let t = m.joint(g, batch, noise)?;
                Ok(LossTerms {
                    total: m.joint_loss(g, &t, beta),
                    reconstruction: Some(t.elbo.reconstruction),
                    kl: Some(t.elbo.kl),
                    classification: Some(t.classification),
                })
            }
        }
    }

    /// Gold-reference token NLLs `[example][reference][token]` for generators.
    pub fn token_nlls(&self, batch: &Batch, source: LatentSource) -> Result<Option<Vec<Vec<Vec<f64>>>>> {
        let mut g = Graph::new(&self.params);
        match &self.net {
            Network::Classifier(_) => Ok(None),
            Network::Seq2Seq(s) => s.token_nlls(&mut g, batch).map(Some),
            Network::Cvae(c) => c.token_nlls(&mut g, batch, source).map(Some),
            Network::Interaction(m) => m.cvae.token_nlls(&mut g, batch, source).map(Some),
        }
    }

    /// Label and/or MAP explanation for one pair.
    pub fn predict(&self, premise: Option<&[u32]>, hypothesis: Option<&[u32]>, max_len: usize) -> Result<Prediction> {
        let hypothesis = hypothesis.ok_or(Error::MissingInput("hypothesis"))?;
        let need_premise = !matches!(&self.net, Network::Classifier(c) if !c.kind.needs_premise())
            && !matches!(&self.net, Network::Seq2Seq(s) if s.mode == GenerationMode::Agnostic);
        let premise = match premise {
            Some(p) => p,
            None if need_premise => return Err(Error::MissingInput("premise")),
            None => &[],
        };
        match &self.net {
            Network::Classifier(c) => {
                let logits = c.classify(&self.params, Some(premise).filter(|p| !p.is_empty()), Some(hypothesis))?;
                Ok(Prediction {
                    label: Some(argmax(logits)),
                    explanation: None,
                })
            }
            Network::Seq2Seq(s) => Ok(Prediction {
                label: None,
                explanation: Some(s.greedy_decode(&self.params, premise, hypothesis, max_len)?),
            }),
            Network::Cvae(c) => Ok(Prediction {
                label: None,
                explanation: Some(c.map_explanation(&self.params, premise, hypothesis, max_len)?),
            }),
            Network::Interaction(m) => {
                let one = m.step_one(&self.params, premise, hypothesis, max_len)?;
                Ok(Prediction {
                    label: Some(one.label.id()),
                    explanation: Some(one.explanation),
                })
            }
        }
    }

    pub fn predict_example(&self, ex: &EncodedExample, max_len: usize) -> Result<Prediction> {
        self.predict(Some(&ex.premise), Some(&ex.hypothesis), max_len)
    }

    /// Step-two sweep; `None` for models without a latent space.
    pub fn interpolate(
        &self,
        premise: &[u32],
        hypothesis: &[u32],
        ks: &[f64],
        direction: Direction,
        max_len: usize,
    ) -> Result<Option<Vec<Vec<u32>>>> {
        let cvae = match &self.net {
            Network::Cvae(c) => c,
            Network::Interaction(m) => &m.cvae,
            _ => return Ok(None),
        };
        cvae.interpolate(&self.params, premise, hypothesis, ks, direction, max_len)
            .map(Some)
    }
}
