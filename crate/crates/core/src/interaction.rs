//! Joint explanation generation and label prediction on top of the CVAE.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::classifiers::{classification_loss, CLASSES};
use crate::concvae::{bos_rows, Cvae, CvaeConfig, Direction, Elbo, LatentGaussian, Noise};
use crate::corpus::{Batch, Label, PaddedSeqs};
use crate::error::{Error, Result};
use crate::generation::{argmax, wrap};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::transformer::{count, Init, Linear, ModelConfig, SequenceStates, TokenInput};

/// Step-two sweep used when none is given.
pub const DEFAULT_K: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Which encoder states the label head reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorVariant {
    /// Premise and hypothesis.
    M1,
    /// Explanation.
    M2,
    /// Both.
    M3,
}

impl PredictorVariant {
    pub fn uses_pair(self) -> bool {
        matches!(self, Self::M1 | Self::M3)
    }

    pub fn uses_explanation(self) -> bool {
        matches!(self, Self::M2 | Self::M3)
    }

    pub fn head_width(self, hidden: usize) -> usize {
        match self {
            Self::M1 | Self::M2 => hidden,
            Self::M3 => 2 * hidden,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JointTerms {
    pub elbo: Elbo,
    pub classification: Var,
}

/// Step-one result for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOne {
    pub label: Label,
    pub logits: [f64; CLASSES],
    pub explanation: Vec<u32>,
    pub prior: LatentGaussian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionOutput {
    pub label: Label,
    pub map_explanation: Vec<u32>,
    pub diverse_explanations: Vec<Vec<u32>>,
    pub latent_used: LatentGaussian,
}

#[derive(Clone, Debug)]
pub struct Interaction {
    pub cvae: Cvae,
    pub variant: PredictorVariant,
    head: Linear,
    pub lambda: f64,
}

impl Interaction {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        cfg: &ModelConfig,
        cvae: &CvaeConfig,
        variant: PredictorVariant,
        lambda: f64,
    ) -> Self {
        let core = Cvae::new(init, cfg, cvae);
        let head = Linear::new(init, "predictor", variant.head_width(cfg.hidden), CLASSES);
        Self {
            cvae: core,
            variant,
            head,
            lambda,
        }
    }

    pub fn param_count(cfg: &ModelConfig, cvae: &CvaeConfig, variant: PredictorVariant) -> usize {
        Cvae::param_count(cfg, cvae) + count::linear(variant.head_width(cfg.hidden), CLASSES)
    }

    /// Label logits from the leading-position states the variant requires.
    pub fn predictor_logits<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x_h: Option<&SequenceStates>,
        y_h: Option<&SequenceStates>,
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(2);
        if self.variant.uses_pair() {
            let x = x_h.ok_or(Error::MissingInput("premise/hypothesis states"))?;
            parts.push(bos_rows(g, x));
        }
        if self.variant.uses_explanation() {
            let y = y_h.ok_or(Error::MissingInput("explanation states"))?;
            parts.push(bos_rows(g, y));
        }
        let features = if parts.len() == 1 { parts[0] } else { g.concat_cols(&parts) };
        Ok(self.head.forward(g, features))
    }

    /// ELBO pieces plus the label cross-entropy against gold explanations,
    /// averaged over reference sets when the head reads explanations.
    pub fn joint<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch, noise: &mut Noise) -> Result<JointTerms> {
        let elbo = self.cvae.elbo(g, batch, noise)?;
        let classification = if self.variant.uses_explanation() {
            let r = elbo.y_h.len();
            let mut parts = Vec::with_capacity(r);
            for y_h in &elbo.y_h {
                let logits = self.predictor_logits(g, Some(&elbo.x_h), Some(y_h))?;
                let ce = classification_loss(g, logits, &batch.labels);
                parts.push(g.scale(ce, T::c(1.0 / r as f64)));
            }
            crate::concvae::sum(g, &parts)
        } else {
            let logits = self.predictor_logits(g, Some(&elbo.x_h), None)?;
            classification_loss(g, logits, &batch.labels)
        };
        Ok(JointTerms { elbo, classification })
    }

    /// `reconstruction + β·kl + λ·ce`.
    pub fn joint_loss<T: Scalar>(&self, g: &mut Graph<'_, T>, terms: &JointTerms, beta: f64) -> Var {
        let kl = g.scale(terms.elbo.kl, T::c(beta));
        let ce = g.scale(terms.classification, T::c(self.lambda));
        let l = g.add(terms.elbo.reconstruction, kl);
        g.add(l, ce)
    }

    /// MAP explanation at the prior mean, then the label; the explanation-reading
    /// variants see the generated explanation re-encoded.
    pub fn step_one<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: &[u32],
        hypothesis: &[u32],
        max_len: usize,
    ) -> Result<StepOne> {
        let mut g = Graph::new(params);
        let (prior, x_h) = self.cvae.prior_single(&mut g, premise, hypothesis)?;
        let explanation = self.cvae.decode_with_latent(&mut g, &prior.mean, &x_h, max_len)?;
        let y_h = if self.variant.uses_explanation() {
            let ids = wrap(&explanation, max_len);
            Some(self.cvae.encoder.forward(&mut g, &TokenInput::from_rows(&[ids.as_slice()]))?)
        } else {
            None
        };
        let logits = self.predictor_logits(&mut g, Some(&x_h), y_h.as_ref())?;
        let row = g.value(logits);
        let logits: [f64; CLASSES] = std::array::from_fn(|j| row[[0, j]].as_f64());
        Ok(StepOne {
            label: Label::from_id(argmax(logits)).expect("three classes"),
            logits,
            explanation,
            prior,
        })
    }

    /// Label without decoding; only for the pair-only head.
    pub fn predict_pair_only<T: Scalar>(&self, params: &ParamStore<T>, premise: &[u32], hypothesis: &[u32]) -> Result<Label> {
        if self.variant != PredictorVariant::M1 {
            return Err(Error::MissingInput("explanation states"));
        }
        let mut g = Graph::new(params);
        let x_h = self.cvae.encode_pairs(
            &mut g,
            &PaddedSeqs::from_rows([premise]),
            &PaddedSeqs::from_rows([hypothesis]),
        )?;
        let l = self.predictor_logits(&mut g, Some(&x_h), None)?;
        Ok(Label::from_id(argmax(g.value(l).row(0).iter().copied())).expect("three classes"))
    }

    /// One explanation per `k`, at `prior mean + k·prior std`.
    pub fn step_two<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: &[u32],
        hypothesis: &[u32],
        ks: &[f64],
        direction: Direction,
        max_len: usize,
    ) -> Result<Vec<Vec<u32>>> {
        self.cvae.interpolate(params, premise, hypothesis, ks, direction, max_len)
    }

    pub fn explain<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: &[u32],
        hypothesis: &[u32],
        ks: &[f64],
        direction: Direction,
        max_len: usize,
    ) -> Result<InteractionOutput> {
        let one = self.step_one(params, premise, hypothesis, max_len)?;
        let diverse = self.step_two(params, premise, hypothesis, ks, direction, max_len)?;
        Ok(InteractionOutput {
            label: one.label,
            map_explanation: one.explanation,
            diverse_explanations: diverse,
            latent_used: one.prior,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::check::check_gradients;
    use crate::corpus::EncodedExample;
    use crate::testutil::{random_examples, tiny_config};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(variant: PredictorVariant, lambda: f64, seed: u64) -> (ParamStore<f64>, Interaction) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Interaction::new(
            &mut Init::new(&mut store, &mut rng),
            &tiny_config(20),
            &CvaeConfig::default(),
            variant,
            lambda,
        );
        (store, m)
    }

    fn batch(ex: &[EncodedExample]) -> Batch {
        let idx: Vec<usize> = (0..ex.len()).collect();
        Batch::from_examples(ex, &idx)
    }

    #[test]
    fn head_widths_and_counts() {
        for (v, w) in [(PredictorVariant::M1, 16), (PredictorVariant::M2, 16), (PredictorVariant::M3, 32)] {
            assert_eq!(v.head_width(16), w);
            let (store, _) = build(v, 1.0, 0);
            assert_eq!(store.scalar_count(), Interaction::param_count(&tiny_config(20), &CvaeConfig::default(), v));
        }
    }

    #[test]
    fn lambda_zero_is_pure_elbo() {
        let (store, m) = build(PredictorVariant::M3, 0.0, 1);
        let b = batch(&random_examples(3, 1, 20, 2));
        let mut g = Graph::new(&store);
        let t = m.joint(&mut g, &b, &mut Noise::seeded(3)).unwrap();
        let joint = m.joint_loss(&mut g, &t, 0.5);
        let elbo = g.scalar(t.elbo.reconstruction) + 0.5 * g.scalar(t.elbo.kl);
        assert!((g.scalar(joint) - elbo).abs() < 1e-12);
    }

    #[test]
    fn head_gradient_comes_from_classification_only() {
        let (store, m) = build(PredictorVariant::M2, 1.0, 4);
        let b = batch(&random_examples(3, 3, 20, 5));
        let mut g = Graph::new(&store);
        let t = m.joint(&mut g, &b, &mut Noise::seeded(6)).unwrap();
        let joint = m.joint_loss(&mut g, &t, 1.0);
        let full = g.backward(joint);
        let ce_only = g.backward(t.classification);
        for id in [m.head.w, m.head.b] {
            let a = full.get(id).unwrap();
            let c = ce_only.get(id).unwrap();
            assert!(a.iter().zip(c).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn m3_joint_gradients_match_finite_differences() {
        let (store, m) = build(PredictorVariant::M3, 1.0, 7);
        let b = batch(&random_examples(2, 1, 20, 8));
        let reports = check_gradients(
            &store,
            |g| {
                let t = m.joint(g, &b, &mut Noise::seeded(9)).unwrap();
                m.joint_loss(g, &t, 1.0)
            },
            1e-5,
            3,
            1e-7,
        );
        for r in &reports {
            assert!(r.max_rel_error <= 1e-3, "{} rel {}", r.name, r.max_rel_error);
        }
        assert!(reports.iter().any(|r| r.name == "predictor.w" && r.checked > 0));
    }

    #[test]
    fn variant_input_independence() {
        let (store, m1) = build(PredictorVariant::M1, 1.0, 10);
        let (p, h): (&[u32], &[u32]) = (&[2, 5, 6, 3], &[2, 7, 3]);
        let mut g = Graph::new(&store);
        let x = m1.cvae.encoder.forward(&mut g, &TokenInput::from_segments(&[vec![p, h]])).unwrap();
        let y1 = m1.cvae.encoder.forward(&mut g, &TokenInput::from_rows(&[&[2, 8, 3]])).unwrap();
        let y2 = m1.cvae.encoder.forward(&mut g, &TokenInput::from_rows(&[&[2, 9, 10, 11, 3]])).unwrap();
        let a = m1.predictor_logits(&mut g, Some(&x), Some(&y1)).unwrap();
        let b = m1.predictor_logits(&mut g, Some(&x), Some(&y2)).unwrap();
        assert_eq!(g.value(a), g.value(b));

        let (store, m2) = build(PredictorVariant::M2, 1.0, 10);
        let mut g = Graph::new(&store);
        let y = m2.cvae.encoder.forward(&mut g, &TokenInput::from_rows(&[&[2, 8, 3]])).unwrap();
        let x1 = m2.cvae.encoder.forward(&mut g, &TokenInput::from_segments(&[vec![p, h]])).unwrap();
        let x2 = m2.cvae.encoder.forward(&mut g, &TokenInput::from_segments(&[vec![&[2, 12, 3], h]])).unwrap();
        let a = m2.predictor_logits(&mut g, Some(&x1), Some(&y)).unwrap();
        let b = m2.predictor_logits(&mut g, Some(&x2), Some(&y)).unwrap();
        assert_eq!(g.value(a), g.value(b));
        assert!(m2.predictor_logits(&mut g, Some(&x1), None).is_err());
    }

    #[test]
    fn step_one_and_two_agree_at_zero() {
        for v in [PredictorVariant::M1, PredictorVariant::M2, PredictorVariant::M3] {
            let (store, m) = build(v, 1.0, 11);
            let (p, h): (&[u32], &[u32]) = (&[2, 5, 6, 3], &[2, 7, 3]);
            let one = m.step_one(&store, p, h, 25).unwrap();
            assert_eq!(one, m.step_one(&store, p, h, 25).unwrap());
            let two = m.step_two(&store, p, h, &DEFAULT_K, Direction::Diagonal, 25).unwrap();
            assert_eq!(two.len(), 5);
            assert_eq!(two[2], one.explanation);
            let out = m.explain(&store, p, h, &[0.0], Direction::Diagonal, 25).unwrap();
            assert_eq!(out.diverse_explanations, vec![out.map_explanation.clone()]);
            if v == PredictorVariant::M1 {
                assert_eq!(m.predict_pair_only(&store, p, h).unwrap(), one.label);
            }
        }
    }
}
