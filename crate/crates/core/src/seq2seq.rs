//! Deterministic explanation generators: hypothesis-only or full-pair encoders
//! feeding a causal decoder.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::concvae::sum;
use crate::corpus::{Batch, PaddedSeqs};
use crate::error::Result;
use crate::generation::{greedy, TeacherForcing};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::transformer::{count, Decoder, Encoder, Init, ModelConfig, SequenceStates, TokenInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// Hypothesis only.
    Agnostic,
    /// Premise and hypothesis.
    Full,
}

#[derive(Clone, Debug)]
pub struct Seq2Seq {
    pub mode: GenerationMode,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Seq2Seq {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, mode: GenerationMode, cfg: &ModelConfig) -> Self {
        Self {
            mode,
            encoder: Encoder::new(init, "encoder", cfg),
            decoder: Decoder::new(init, "decoder", cfg),
        }
    }

    pub fn param_count(cfg: &ModelConfig) -> usize {
        count::encoder(cfg) + count::decoder(cfg)
    }

    pub fn memory<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        premise: &PaddedSeqs,
        hypothesis: &PaddedSeqs,
    ) -> Result<SequenceStates> {
        let input = match self.mode {
            GenerationMode::Agnostic => TokenInput::from_padded(hypothesis),
            GenerationMode::Full => TokenInput::pairs(premise, hypothesis),
        };
        self.encoder.forward(g, &input)
    }

    /// Teacher-forced token cross-entropy: per-sequence token mean, averaged
    /// over references and then over examples.
    pub fn loss<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch) -> Result<Var> {
        let memory = self.memory(g, &batch.premise, &batch.hypothesis)?;
        let w = 1.0 / (batch.len() * batch.explanations.len()) as f64;
        let mut parts = Vec::with_capacity(batch.explanations.len());
        for seqs in &batch.explanations {
            let tf = TeacherForcing::new(seqs);
            let logits = self.decoder.decode(g, &tf.input, &memory)?;
            parts.push(g.softmax_xent(logits, tf.xent_targets(w)));
        }
        Ok(sum(g, &parts))
    }

    /// Gold-reference token NLLs `[example][reference][token]`.
    pub fn token_nlls<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch) -> Result<Vec<Vec<Vec<f64>>>> {
        let memory = self.memory(g, &batch.premise, &batch.hypothesis)?;
        let mut out = vec![Vec::with_capacity(batch.explanations.len()); batch.len()];
        for seqs in &batch.explanations {
            let tf = TeacherForcing::new(seqs);
            let logits = self.decoder.decode(g, &tf.input, &memory)?;
            for (i, nll) in tf.token_nlls(g.value(logits)).into_iter().enumerate() {
                out[i].push(nll);
            }
        }
        Ok(out)
    }

    /// Greedy explanation for one pair; the premise is ignored in agnostic mode.
    pub fn greedy_decode<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: &[u32],
        hypothesis: &[u32],
        max_len: usize,
    ) -> Result<Vec<u32>> {
        let mut g = Graph::new(params);
        let memory = self.memory(
            &mut g,
            &PaddedSeqs::from_rows([premise]),
            &PaddedSeqs::from_rows([hypothesis]),
        )?;
        greedy(&mut g, &self.decoder, &memory, max_len)
    }
}
