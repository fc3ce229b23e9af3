use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EncodedExample, BOS, EOS};
use crate::transformer::ModelConfig;

pub fn tiny_config(vocab: usize) -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_pos: 25,
        vocab_size: vocab,
        dropout: 0.0,
    }
}

fn sequence(rng: &mut ChaCha8Rng, vocab: usize, min: usize, max: usize) -> Vec<u32> {
    let n = rng.random_range(min..=max);
    let mut v = vec![BOS];
    v.extend((0..n).map(|_| rng.random_range(4..vocab as u32)));
    v.push(EOS);
    v
}

/// Random id-level examples with `refs` explanations each.
pub fn random_examples(n: usize, refs: usize, vocab: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| EncodedExample {
            premise: sequence(&mut rng, vocab, 1, 5),
            hypothesis: sequence(&mut rng, vocab, 0, 4),
            explanations: (0..refs).map(|_| sequence(&mut rng, vocab, 0, 4)).collect(),
            label: i % 3,
        })
        .collect()
}
