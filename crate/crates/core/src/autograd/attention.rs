use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, Axis};

use super::Var;
use crate::scalar::Scalar;

/// One independent attention problem inside a stacked batch: the query rows
/// `queries` attend to the key rows `keys` whose `key_mask` entry is true.
/// With `causal`, query `i` (block-local) sees only keys `j <= i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttnBlock {
    pub queries: Range<usize>,
    pub keys: Range<usize>,
    pub key_mask: Vec<bool>,
    pub causal: bool,
}

impl AttnBlock {
    fn valid_keys(&self) -> Vec<usize> {
        assert_eq!(self.key_mask.len(), self.keys.len(), "key mask length");
        self.key_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(j, _)| j)
            .collect()
    }
}

pub(crate) struct AttnTape<T> {
    pub q: Var,
    pub k: Var,
    pub v: Var,
    heads: usize,
    scale: T,
    blocks: Vec<AttnBlock>,
    valid: Vec<Vec<usize>>,
    // probs[block][head]: [queries × valid keys]
    probs: Vec<Vec<Array2<T>>>,
}

fn head_keys<T: Scalar>(x: ArrayView2<'_, T>, block: &AttnBlock, valid: &[usize], cols: Range<usize>) -> Array2<T> {
    let local = x.slice(s![block.keys.clone(), cols]);
    local.select(Axis(0), valid)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn forward<T: Scalar>(
    qv: ArrayView2<'_, T>,
    kv: ArrayView2<'_, T>,
    vv: ArrayView2<'_, T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    blocks: Vec<AttnBlock>,
) -> (Array2<T>, AttnTape<T>) {
    let (nq, hidden) = qv.dim();
    assert_eq!(hidden % heads, 0, "hidden not divisible by heads");
    let dh = hidden / heads;
    let scale = T::one() / T::from_usize_lossy(dh).sqrt();
    let mut out = Array2::zeros((nq, hidden));
    let mut valid_all = Vec::with_capacity(blocks.len());
    let mut probs_all = Vec::with_capacity(blocks.len());

    for block in &blocks {
        let valid = block.valid_keys();
        let mut probs_b = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = qv.slice(s![block.queries.clone(), cols.clone()]);
            let kh = head_keys(kv, block, &valid, cols.clone());
            let vh = head_keys(vv, block, &valid, cols.clone());
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|x| x * scale);
            for (i, mut row) in scores.outer_iter_mut().enumerate() {
                if block.causal {
                    for (jj, &j) in valid.iter().enumerate() {
                        if j > i {
                            row[jj] = T::neg_infinity();
                        }
                    }
                }
                softmax_in_place(row.as_slice_mut().expect("contiguous row"));
            }
            let o = scores.dot(&vh);
            out.slice_mut(s![block.queries.clone(), cols]).assign(&o);
            probs_b.push(scores);
        }
        valid_all.push(valid);
        probs_all.push(probs_b);
    }

    let tape = AttnTape {
        q,
        k,
        v,
        heads,
        scale,
        blocks,
        valid: valid_all,
        probs: probs_all,
    };
    (out, tape)
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        row.iter_mut().for_each(|x| *x = T::zero());
        return;
    }
    let mut z = T::zero();
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}

pub(crate) fn backward<T: Scalar>(
    tape: &AttnTape<T>,
    g: &Array2<T>,
    qv: ArrayView2<'_, T>,
    kv: ArrayView2<'_, T>,
    vv: ArrayView2<'_, T>,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let hidden = qv.ncols();
    let dh = hidden / tape.heads;
    let mut dq = Array2::zeros(qv.dim());
    let mut dk = Array2::zeros(kv.dim());
    let mut dv = Array2::zeros(vv.dim());

    for ((block, valid), probs_b) in tape.blocks.iter().zip(&tape.valid).zip(&tape.probs) {
        for (h, p) in probs_b.iter().enumerate() {
            let cols = h * dh..(h + 1) * dh;
            let qh = qv.slice(s![block.queries.clone(), cols.clone()]);
            let kh = head_keys(kv, block, valid, cols.clone());
            let vh = head_keys(vv, block, valid, cols.clone());
            let go = g.slice(s![block.queries.clone(), cols.clone()]);

            let dp = go.dot(&vh.t());
            let dvh = p.t().dot(&go);
            let mut ds = &dp * p;
            for (mut row, prow) in ds.outer_iter_mut().zip(p.outer_iter()) {
                let total: T = row.sum();
                for (d, &pv) in row.iter_mut().zip(prow.iter()) {
                    *d -= pv * total;
                }
            }
            ds.mapv_inplace(|x| x * tape.scale);
            let dqh = ds.dot(&kh);
            let dkh = ds.t().dot(&qh);

            let mut dq_slice = dq.slice_mut(s![block.queries.clone(), cols.clone()]);
            dq_slice += &dqh;
            for (jj, &j) in valid.iter().enumerate() {
                let row = block.keys.start + j;
                let mut dk_row = dk.slice_mut(s![row, cols.clone()]);
                dk_row += &dkh.row(jj);
                let mut dv_row = dv.slice_mut(s![row, cols.clone()]);
                dv_row += &dvh.row(jj);
            }
        }
    }
    (dq, dk, dv)
}
