//! Post-norm Transformer encoder/decoder with learned positions.

pub mod count;
mod embedding;
mod layers;

use serde::{Deserialize, Serialize};

use crate::autograd::{AttnBlock, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use embedding::{segment_positions, zero_rows, Embedding, Layout, TokenInput};
pub use layers::{FeedForward, Init, LayerNorm, Linear, MultiHeadAttention};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_pos: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// 6 layers, 512 hidden, 8 heads, 2048 feed-forward, 25 positions.
    pub fn base(vocab_size: usize) -> Self {
        Self {
            layers: 6,
            hidden: 512,
            heads: 8,
            ffn: 2048,
            max_pos: 25,
            vocab_size,
            dropout: 0.1,
        }
    }

    /// Desk-scale profile: 2 layers, 64 hidden, 2 heads.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            layers: 2,
            hidden: 64,
            heads: 2,
            ffn: 256,
            max_pos: 25,
            vocab_size,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if self.max_pos < 3 {
            return Err(Error::Config("max_pos must be at least 3".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config("vocabulary too small".into()));
        }
        Ok(())
    }
}

/// Contextual states for a stack of sequences.
#[derive(Clone, Debug)]
pub struct SequenceStates {
    pub values: Var,
    pub layout: Layout,
}

fn self_blocks(layout: &Layout, causal: bool) -> Vec<AttnBlock> {
    layout
        .spans
        .iter()
        .map(|s| AttnBlock {
            queries: s.clone(),
            keys: s.clone(),
            key_mask: layout.mask[s.clone()].to_vec(),
            causal,
        })
        .collect()
}

fn cross_blocks(target: &Layout, memory: &Layout) -> Vec<AttnBlock> {
    assert_eq!(
        target.sequences(),
        memory.sequences(),
        "target and memory sequence counts differ"
    );
    target
        .spans
        .iter()
        .zip(&memory.spans)
        .map(|(t, m)| AttnBlock {
            queries: t.clone(),
            keys: m.clone(),
            key_mask: memory.mask[m.clone()].to_vec(),
            causal: false,
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    attn: MultiHeadAttention,
    norm1: LayerNorm,
    ffn: FeedForward,
    norm2: LayerNorm,
}

impl EncoderLayer {
    fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, cfg: &ModelConfig) -> Self {
        Self {
            attn: MultiHeadAttention::new(init, &format!("{name}.attn"), cfg.hidden, cfg.heads),
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), cfg.hidden),
            ffn: FeedForward::new(init, &format!("{name}.ffn"), cfg.hidden, cfg.ffn),
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), cfg.hidden),
        }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, blocks: &[AttnBlock]) -> Var {
        let a = self.attn.forward(g, x, x, blocks.to_vec());
        let a = g.dropout(a);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, x);
        let f = self.ffn.forward(g, x);
        let f = g.dropout(f);
        let x = g.add(x, f);
        self.norm2.forward(g, x)
    }
}

/// Token embedding followed by a stack of self-attention layers.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub embedding: Embedding,
    layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, cfg: &ModelConfig) -> Self {
        let embedding = Embedding::new(init, &format!("{name}.embed"), cfg.vocab_size, cfg.max_pos, cfg.hidden);
        let layers = (0..cfg.layers)
            .map(|i| EncoderLayer::new(init, &format!("{name}.layers.{i}"), cfg))
            .collect();
        Self { embedding, layers }
    }

    pub fn embed<T: Scalar>(&self, g: &mut Graph<'_, T>, input: &TokenInput) -> Result<SequenceStates> {
        Ok(SequenceStates {
            values: self.embedding.forward(g, input)?,
            layout: input.layout.clone(),
        })
    }

    /// Runs the layer stack; pad rows never feed real rows.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<'_, T>, states: SequenceStates) -> SequenceStates {
        let blocks = self_blocks(&states.layout, false);
        let mut x = states.values;
        for layer in &self.layers {
            x = layer.forward(g, x, &blocks);
        }
        SequenceStates {
            values: x,
            layout: states.layout,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, input: &TokenInput) -> Result<SequenceStates> {
        let states = self.embed(g, input)?;
        Ok(self.encode(g, states))
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm2: LayerNorm,
    ffn: FeedForward,
    norm3: LayerNorm,
}

impl DecoderLayer {
    fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, cfg: &ModelConfig) -> Self {
        Self {
            self_attn: MultiHeadAttention::new(init, &format!("{name}.self_attn"), cfg.hidden, cfg.heads),
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), cfg.hidden),
            cross_attn: MultiHeadAttention::new(init, &format!("{name}.cross_attn"), cfg.hidden, cfg.heads),
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), cfg.hidden),
            ffn: FeedForward::new(init, &format!("{name}.ffn"), cfg.hidden, cfg.ffn),
            norm3: LayerNorm::new(init, &format!("{name}.norm3"), cfg.hidden),
        }
    }

    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        memory: Var,
        self_blocks: &[AttnBlock],
        cross_blocks: &[AttnBlock],
    ) -> Var {
        let a = self.self_attn.forward(g, x, x, self_blocks.to_vec());
        let a = g.dropout(a);
        let x = g.add(x, a);
        let x = self.norm1.forward(g, x);
        let c = self.cross_attn.forward(g, x, memory, cross_blocks.to_vec());
        let c = g.dropout(c);
        let x = g.add(x, c);
        let x = self.norm2.forward(g, x);
        let f = self.ffn.forward(g, x);
        let f = g.dropout(f);
        let x = g.add(x, f);
        self.norm3.forward(g, x)
    }
}

/// Causal decoder with its own embedding table and a vocabulary projection.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub embedding: Embedding,
    layers: Vec<DecoderLayer>,
    out: Linear,
}

impl Decoder {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, cfg: &ModelConfig) -> Self {
        let embedding = Embedding::new(init, &format!("{name}.embed"), cfg.vocab_size, cfg.max_pos, cfg.hidden);
        let layers = (0..cfg.layers)
            .map(|i| DecoderLayer::new(init, &format!("{name}.layers.{i}"), cfg))
            .collect();
        let out = Linear::new(init, &format!("{name}.out"), cfg.hidden, cfg.vocab_size);
        Self { embedding, layers, out }
    }

    /// Next-token logits `[rows × vocab]` for teacher-forced prefixes. Row `t`
    /// depends only on prefix positions `<= t` and on `memory`.
    pub fn decode<T: Scalar>(&self, g: &mut Graph<'_, T>, prefix: &TokenInput, memory: &SequenceStates) -> Result<Var> {
        let mut x = self.embedding.forward(g, prefix)?;
        let sb = self_blocks(&prefix.layout, true);
        let cb = cross_blocks(&prefix.layout, &memory.layout);
        for layer in &self.layers {
            x = layer.forward(g, x, memory.values, &sb, &cb);
        }
        Ok(self.out.forward(g, x))
    }
}
