//! Teacher forcing and greedy decoding shared by every generator.

use ndarray::ArrayView2;

use crate::autograd::{Graph, Var, XentTarget};
use crate::corpus::{PaddedSeqs, BOS, EOS};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::transformer::{Decoder, SequenceStates, TokenInput};

/// Decoder inputs (`<bos> y1 … yn`) and their next-token targets (`y1 … yn <eos>`).
#[derive(Clone, Debug)]
pub struct TeacherForcing {
    pub input: TokenInput,
    /// `(row, gold id)` for every real target position.
    pub targets: Vec<(usize, usize)>,
    /// Sequence index of each target.
    pub owner: Vec<usize>,
    /// Target count per sequence.
    pub counts: Vec<usize>,
}

impl TeacherForcing {
    pub fn new(seqs: &PaddedSeqs) -> Self {
        let rows: Vec<&[u32]> = (0..seqs.rows())
            .map(|i| {
                let r = seqs.real(i);
                &r[..r.len() - 1]
            })
            .collect();
        let input = TokenInput::from_rows(&rows);
        let mut targets = Vec::new();
        let mut owner = Vec::new();
        let mut counts = Vec::with_capacity(seqs.rows());
        for i in 0..seqs.rows() {
            let real = seqs.real(i);
            let start = input.layout.spans[i].start;
            for (t, &gold) in real[1..].iter().enumerate() {
                targets.push((start + t, gold as usize));
                owner.push(i);
            }
            counts.push(real.len() - 1);
        }
        Self {
            input,
            targets,
            owner,
            counts,
        }
    }

    /// Cross-entropy targets weighted so each sequence contributes its
    /// per-token mean times `seq_weight`.
    pub fn xent_targets<T: Scalar>(&self, seq_weight: f64) -> Vec<XentTarget<T>> {
        self.targets
            .iter()
            .zip(&self.owner)
            .map(|(&(row, class), &o)| XentTarget {
                row,
                class,
                weight: T::c(seq_weight / self.counts[o] as f64),
            })
            .collect()
    }

    /// Per-sequence token negative log-likelihoods read off computed logits.
    pub fn token_nlls<T: Scalar>(&self, logits: ArrayView2<'_, T>) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.counts.len()];
        for (&(row, class), &o) in self.targets.iter().zip(&self.owner) {
            out[o].push(nll(logits.row(row).iter().map(|v| v.as_f64()), class));
        }
        out
    }
}

fn nll(row: impl Iterator<Item = f64> + Clone, class: usize) -> f64 {
    let m = row.clone().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.clone().map(|x| (x - m).exp()).sum();
    let target = row.clone().nth(class).expect("class in range");
    m + z.ln() - target
}

/// Teacher-forced mean token cross-entropy, averaged over sequences with `seq_weight` each.
pub fn teacher_forced_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    decoder: &Decoder,
    tf: &TeacherForcing,
    memory: &SequenceStates,
    seq_weight: f64,
) -> Result<(Var, Var)> {
    let logits = decoder.decode(g, &tf.input, memory)?;
    let loss = g.softmax_xent(logits, tf.xent_targets(seq_weight));
    Ok((loss, logits))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in row.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Greedy decoding against a single-sequence memory. Returns generated ids
/// without `<bos>`/`<eos>`; at most `max_len` ids.
pub fn greedy<T: Scalar>(
    g: &mut Graph<'_, T>,
    decoder: &Decoder,
    memory: &SequenceStates,
    max_len: usize,
) -> Result<Vec<u32>> {
    assert_eq!(memory.layout.sequences(), 1, "greedy decoding needs one memory sequence");
    let mut prefix = vec![BOS];
    let mut out = Vec::new();
    for _ in 0..max_len {
        let input = TokenInput::from_rows(&[prefix.as_slice()]);
        let logits = decoder.decode(g, &input, memory)?;
        let lv = g.value(logits);
        let next = argmax(lv.row(lv.nrows() - 1).iter().copied()) as u32;
        if next == EOS {
            break;
        }
        out.push(next);
        prefix.push(next);
    }
    Ok(out)
}

/// `<bos> ids <eos>` clipped to `max_len`, for re-encoding generated text.
pub fn wrap(ids: &[u32], max_len: usize) -> Vec<u32> {
    let body = ids.len().min(max_len.saturating_sub(2));
    let mut v = Vec::with_capacity(body + 2);
    v.push(BOS);
    v.extend_from_slice(&ids[..body]);
    v.push(EOS);
    v
}
