//! Closed-form parameter counts for the building blocks.

use super::ModelConfig;

pub fn linear(fan_in: usize, fan_out: usize) -> usize {
    fan_in * fan_out + fan_out
}

pub fn embedding(cfg: &ModelConfig) -> usize {
    cfg.vocab_size * cfg.hidden + cfg.max_pos * cfg.hidden
}

pub fn attention(hidden: usize) -> usize {
    4 * linear(hidden, hidden)
}

pub fn feed_forward(hidden: usize, ffn: usize) -> usize {
    linear(hidden, ffn) + linear(ffn, hidden)
}

pub fn layer_norm(hidden: usize) -> usize {
    2 * hidden
}

pub fn encoder_layer(cfg: &ModelConfig) -> usize {
    attention(cfg.hidden) + feed_forward(cfg.hidden, cfg.ffn) + 2 * layer_norm(cfg.hidden)
}

pub fn decoder_layer(cfg: &ModelConfig) -> usize {
    2 * attention(cfg.hidden) + feed_forward(cfg.hidden, cfg.ffn) + 3 * layer_norm(cfg.hidden)
}

/// Embedding plus the layer stack.
pub fn encoder(cfg: &ModelConfig) -> usize {
    embedding(cfg) + cfg.layers * encoder_layer(cfg)
}

/// Embedding, layer stack and vocabulary projection.
pub fn decoder(cfg: &ModelConfig) -> usize {
    embedding(cfg) + cfg.layers * decoder_layer(cfg) + linear(cfg.hidden, cfg.vocab_size)
}

/// Three convolution widths (1, 2, 3) with `hidden` channels each, then `3·hidden → hidden`.
pub fn concoder(hidden: usize) -> usize {
    (1..=3).map(|w| linear(w * hidden, hidden)).sum::<usize>() + linear(3 * hidden, hidden)
}
