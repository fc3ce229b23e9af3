use std::ops::Range;

use ndarray::Array2;

use crate::autograd::{Graph, Var};
use crate::corpus::{PaddedSeqs, PAD};
use crate::error::{Error, Result};
use crate::params::{normal, ParamId};
use crate::scalar::Scalar;

use super::layers::Init;

/// Row bookkeeping for a stack of padded sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    /// Rows of each sequence (pads included).
    pub spans: Vec<Range<usize>>,
    /// `true` for real tokens.
    pub mask: Vec<bool>,
    /// Block-local start of every segment of each sequence.
    pub segment_starts: Vec<Vec<usize>>,
}

impl Layout {
    pub fn rows(&self) -> usize {
        self.mask.len()
    }

    pub fn sequences(&self) -> usize {
        self.spans.len()
    }

    /// Number of real tokens in sequence `i`.
    pub fn real_len(&self, i: usize) -> usize {
        self.mask[self.spans[i].clone()].iter().filter(|&&m| m).count()
    }

    /// Absolute row indices of the real tokens of sequence `i`.
    pub fn real_rows(&self, i: usize) -> Vec<usize> {
        self.spans[i].clone().filter(|&r| self.mask[r]).collect()
    }

    /// Absolute row of the first token of sequence `i`.
    pub fn first_row(&self, i: usize) -> usize {
        self.spans[i].start
    }
}

/// Token ids for a stack of sequences, each made of one or more segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenInput {
    pub ids: Vec<u32>,
    pub positions: Vec<usize>,
    pub layout: Layout,
}

impl TokenInput {
    /// Each row is the concatenation of its segments; rows are right-padded to the
    /// longest row. Position counters restart at every segment; pads get position 0.
    pub fn from_segments(rows: &[Vec<&[u32]>]) -> Self {
        let width = rows
            .iter()
            .map(|segs| segs.iter().map(|s| s.len()).sum::<usize>())
            .max()
            .unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len() * width);
        let mut positions = Vec::with_capacity(ids.capacity());
        let mut mask = Vec::with_capacity(ids.capacity());
        let mut spans = Vec::with_capacity(rows.len());
        let mut segment_starts = Vec::with_capacity(rows.len());
        for segs in rows {
            let start = ids.len();
            let mut starts = Vec::with_capacity(segs.len());
            let mut local = 0;
            for seg in segs {
                starts.push(local);
                ids.extend_from_slice(seg);
                positions.extend(0..seg.len());
                mask.extend(std::iter::repeat_n(true, seg.len()));
                local += seg.len();
            }
            for _ in local..width {
                ids.push(PAD);
                positions.push(0);
                mask.push(false);
            }
            spans.push(start..start + width);
            segment_starts.push(starts);
        }
        Self {
            ids,
            positions,
            layout: Layout {
                spans,
                mask,
                segment_starts,
            },
        }
    }

    /// One single-segment sequence per row.
    pub fn from_rows(rows: &[&[u32]]) -> Self {
        let segs: Vec<Vec<&[u32]>> = rows.iter().map(|r| vec![*r]).collect();
        Self::from_segments(&segs)
    }

    pub fn from_padded(seqs: &PaddedSeqs) -> Self {
        let rows: Vec<&[u32]> = (0..seqs.rows()).map(|i| seqs.real(i)).collect();
        Self::from_rows(&rows)
    }

    /// Row `i` is `first[i]` followed by `second[i]` as two segments.
    pub fn pairs(first: &PaddedSeqs, second: &PaddedSeqs) -> Self {
        assert_eq!(first.rows(), second.rows(), "pair inputs differ in row count");
        let rows: Vec<Vec<&[u32]>> = (0..first.rows())
            .map(|i| vec![first.real(i), second.real(i)])
            .collect();
        Self::from_segments(&rows)
    }
}

/// Position indices for a sequence of length `len` whose segments begin at
/// `segment_starts`; fails when a segment does not fit the positional table.
pub fn segment_positions(len: usize, segment_starts: &[usize], max_pos: usize) -> Result<Vec<usize>> {
    let mut bounds: Vec<usize> = segment_starts.to_vec();
    if bounds.first() != Some(&0) {
        bounds.insert(0, 0);
    }
    bounds.push(len);
    let mut out = Vec::with_capacity(len);
    for w in bounds.windows(2) {
        let seg = w[1] - w[0];
        if seg > max_pos {
            return Err(Error::SegmentTooLong { len: seg, max_pos });
        }
        out.extend(0..seg);
    }
    Ok(out)
}

/// Learned token and position tables.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub tokens: ParamId,
    pub positions: ParamId,
    pub hidden: usize,
    pub max_pos: usize,
}

impl Embedding {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, vocab: usize, max_pos: usize, hidden: usize) -> Self {
        let tokens = init
            .store
            .register(format!("{name}.tokens"), normal(init.rng, vocab, hidden, 0.02));
        let positions = init
            .store
            .register(format!("{name}.positions"), normal(init.rng, max_pos, hidden, 0.02));
        Self {
            tokens,
            positions,
            hidden,
            max_pos,
        }
    }

    /// `√hidden · token + position` per row.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, input: &TokenInput) -> Result<Var> {
        for (i, span) in input.layout.spans.iter().enumerate() {
            let real = input.layout.real_len(i);
            let starts = &input.layout.segment_starts[i];
            let _ = segment_positions(real, starts, self.max_pos)?;
            debug_assert!(span.len() >= real);
        }
        let table = g.param(self.tokens);
        let pos_table = g.param(self.positions);
        let tok = g.gather_rows(table, input.ids.iter().map(|&i| i as usize).collect());
        let tok = g.scale(tok, T::from_usize_lossy(self.hidden).sqrt());
        let pos = g.gather_rows(pos_table, input.positions.clone());
        let x = g.add(tok, pos);
        Ok(g.dropout(x))
    }

    /// The raw token vector for `id`, as a `[1 × hidden]` row.
    pub fn token_row<T: Scalar>(&self, g: &mut Graph<'_, T>, id: u32) -> Var {
        let table = g.param(self.tokens);
        g.gather_rows(table, vec![id as usize])
    }
}

/// Stacked constant zero rows, used for short-sequence padding.
pub fn zero_rows<T: Scalar>(g: &mut Graph<'_, T>, rows: usize, cols: usize) -> Var {
    g.constant(Array2::zeros((rows, cols)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_segment_positions() {
        assert_eq!(segment_positions(5, &[0], 25).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn restarting_segments() {
        assert_eq!(
            segment_positions(7, &[0, 3], 25).unwrap(),
            vec![0, 1, 2, 0, 1, 2, 3]
        );
    }

    #[test]
    fn too_long_segment_rejected() {
        let err = segment_positions(26, &[0], 25).unwrap_err();
        assert!(matches!(err, Error::SegmentTooLong { len: 26, max_pos: 25 }));
        // two segments of 25 fit
        assert!(segment_positions(50, &[0, 25], 25).is_ok());
    }

    #[test]
    fn token_input_layout() {
        let a: &[u32] = &[2, 5, 3];
        let b: &[u32] = &[2, 6, 7, 3];
        let c: &[u32] = &[2, 3];
        let inp = TokenInput::from_segments(&[vec![a, b], vec![c]]);
        assert_eq!(inp.layout.spans, vec![0..7, 7..14]);
        assert_eq!(inp.positions[..7], [0, 1, 2, 0, 1, 2, 3]);
        assert_eq!(inp.layout.segment_starts, vec![vec![0, 3], vec![0]]);
        assert_eq!(inp.layout.real_len(1), 2);
        assert_eq!(inp.ids[9..], [PAD; 5]);
        assert_eq!(inp.layout.real_rows(1), vec![7, 8]);
    }
}
