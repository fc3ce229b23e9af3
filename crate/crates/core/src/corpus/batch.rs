use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Quadruplet, Vocabulary, PAD};

/// A record converted to id sequences (each `<bos> … <eos>`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedExample {
    pub premise: Vec<u32>,
    pub hypothesis: Vec<u32>,
    pub explanations: Vec<Vec<u32>>,
    pub label: usize,
}

pub fn encode_corpus(corpus: &[Quadruplet], vocab: &Vocabulary, max_len: usize) -> Vec<EncodedExample> {
    corpus
        .iter()
        .map(|q| EncodedExample {
            premise: vocab.encode(&q.premise, max_len),
            hypothesis: vocab.encode(&q.hypothesis, max_len),
            explanations: q
                .explanations
                .iter()
                .map(|e| vocab.encode(e, max_len))
                .collect(),
            label: q.label.id(),
        })
        .collect()
}

/// Rows padded with `<pad>` to a common width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedSeqs {
    pub ids: Vec<Vec<u32>>,
    pub lens: Vec<usize>,
}

impl PaddedSeqs {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [u32]>) -> Self {
        let rows: Vec<&[u32]> = rows.into_iter().collect();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let lens = rows.iter().map(|r| r.len()).collect();
        let ids = rows
            .iter()
            .map(|r| {
                let mut v = r.to_vec();
                v.resize(width, PAD);
                v
            })
            .collect();
        Self { ids, lens }
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn width(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }

    /// Unpadded ids of row `i`.
    pub fn real(&self, i: usize) -> &[u32] {
        &self.ids[i][..self.lens[i]]
    }

    /// `true` at real positions, `false` at `<pad>`.
    pub fn mask(&self, i: usize) -> Vec<bool> {
        (0..self.width()).map(|j| j < self.lens[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub premise: PaddedSeqs,
    pub hypothesis: PaddedSeqs,
    /// One entry for training batches, three reference sets otherwise.
    pub explanations: Vec<PaddedSeqs>,
    pub labels: Vec<usize>,
    /// Positions of the rows in the source corpus.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_examples(examples: &[EncodedExample], indices: &[usize]) -> Self {
        let pick = |i: &usize| &examples[*i];
        let n_refs = indices
            .first()
            .map_or(1, |i| examples[*i].explanations.len());
        Self {
            premise: PaddedSeqs::from_rows(indices.iter().map(|i| pick(i).premise.as_slice())),
            hypothesis: PaddedSeqs::from_rows(indices.iter().map(|i| pick(i).hypothesis.as_slice())),
            explanations: (0..n_refs)
                .map(|r| {
                    PaddedSeqs::from_rows(indices.iter().map(|i| pick(i).explanations[r].as_slice()))
                })
                .collect(),
            labels: indices.iter().map(|i| pick(i).label).collect(),
            indices: indices.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Shuffles with a seed-determined permutation and cuts into batches; the last
/// batch may be partial.
pub fn make_batches(examples: &[EncodedExample], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .map(|c| Batch::from_examples(examples, c))
        .collect()
}

/// Batches in corpus order, for evaluation.
pub fn sequential_batches(examples: &[EncodedExample], batch_size: usize) -> Vec<Batch> {
    let order: Vec<usize> = (0..examples.len()).collect();
    order
        .chunks(batch_size.max(1))
        .map(|c| Batch::from_examples(examples, c))
        .collect()
}
