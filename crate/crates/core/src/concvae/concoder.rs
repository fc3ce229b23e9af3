use std::ops::Range;

use crate::autograd::{Graph, Var};
use crate::scalar::Scalar;
use crate::transformer::{Init, Linear, SequenceStates};

pub const WIDTHS: [usize; 3] = [1, 2, 3];

/// Width-1/2/3 convolutions over positions, max-pooled per channel, then an
/// affine map from the concatenated pools back to `hidden`.
#[derive(Clone, Debug)]
pub struct Concoder {
    convs: Vec<Linear>,
    proj: Linear,
}

impl Concoder {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, hidden: usize) -> Self {
        let convs = WIDTHS
            .iter()
            .map(|&w| Linear::new(init, &format!("{name}.conv{w}"), w * hidden, hidden))
            .collect();
        let proj = Linear::new(init, &format!("{name}.proj"), WIDTHS.len() * hidden, hidden);
        Self { convs, proj }
    }

    /// One pooled row per sequence, `[S × hidden]`. Sequences shorter than the
    /// widest filter are left-padded with `pad` (a `[1 × hidden]` row).
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, states: &SequenceStates, pad: Var) -> Var {
        let pooled = self.pooled_channels(g, states, pad);
        let cat = g.concat_cols(&pooled);
        self.proj.forward(g, cat)
    }

    /// Max-pooled outputs of each filter width, `[S × hidden]` each.
    pub fn pooled_channels<T: Scalar>(&self, g: &mut Graph<'_, T>, states: &SequenceStates, pad: Var) -> Vec<Var> {
        let widest = *WIDTHS.last().expect("widths");
        let pad_index = states.layout.rows();
        let mut rows = Vec::new();
        let mut seqs: Vec<Range<usize>> = Vec::new();
        for i in 0..states.layout.sequences() {
            let real = states.layout.real_rows(i);
            let start = rows.len();
            for _ in real.len()..widest {
                rows.push(pad_index);
            }
            rows.extend(real);
            seqs.push(start..rows.len());
        }
        let source = g.concat_rows(&[states.values, pad]);
        let x = g.gather_rows(source, rows);
        WIDTHS
            .iter()
            .zip(&self.convs)
            .map(|(&w, conv)| {
                let mut starts = Vec::new();
                let mut segments = Vec::new();
                for s in &seqs {
                    let first = starts.len();
                    starts.extend(s.start..=s.end - w);
                    segments.push(first..starts.len());
                }
                let windows = g.unfold(x, starts, w);
                let c = conv.forward(g, windows);
                g.segment_max(c, &segments)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::transformer::Layout;
    use ndarray::{Array2, Axis};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(hidden: usize) -> (ParamStore<f64>, Concoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = Concoder::new(&mut Init::new(&mut store, &mut rng), "cc", hidden);
        (store, c)
    }

    fn states_of<T: Scalar>(g: &mut Graph<'_, T>, x: Array2<T>) -> SequenceStates {
        let n = x.nrows();
        SequenceStates {
            values: g.constant(x),
            layout: Layout {
                spans: vec![0..n],
                mask: vec![true; n],
                segment_starts: vec![vec![0]],
            },
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::params::standard_normal(&mut rng, rows, cols)
    }

    #[test]
    fn collapses_to_one_row() {
        let (store, c) = setup(8);
        let mut g = Graph::new(&store);
        let st = states_of(&mut g, random(7, 8, 1));
        let pad = g.constant(Array2::zeros((1, 8)));
        let out = c.forward(&mut g, &st, pad);
        assert_eq!(g.shape(out), (1, 8));
    }

    #[test]
    fn width_one_pool_is_repetition_and_permutation_invariant() {
        let (store, c) = setup(6);
        let x = random(5, 6, 2);
        let width_pools = |x: Array2<f64>| {
            let mut g = Graph::new(&store);
            let st = states_of(&mut g, x);
            let pad = g.constant(Array2::zeros((1, 6)));
            let p = c.pooled_channels(&mut g, &st, pad);
            p.iter().map(|&v| g.value(v).to_owned()).collect::<Vec<_>>()
        };
        let base = width_pools(x.clone());
        let doubled = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        assert_eq!(width_pools(doubled)[0], base[0]);

        let mut order: Vec<usize> = (0..5).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        assert_ne!(order, vec![0, 1, 2, 3, 4]);
        let permuted = width_pools(x.select(Axis(0), &order));
        assert_eq!(permuted[0], base[0]);
        assert!(permuted[1] != base[1] || permuted[2] != base[2]);
    }

    #[test]
    fn short_sequences_are_padded() {
        let (store, c) = setup(4);
        let mut g = Graph::new(&store);
        let st = states_of(&mut g, random(2, 4, 5));
        let pad = g.constant(Array2::zeros((1, 4)));
        let out = c.forward(&mut g, &st, pad);
        assert_eq!(g.shape(out), (1, 4));
    }

    #[test]
    fn batched_matches_individual() {
        let (store, c) = setup(4);
        let a = random(5, 4, 6);
        let b = random(3, 4, 7);
        let single = |x: Array2<f64>| {
            let mut g = Graph::new(&store);
            let st = states_of(&mut g, x);
            let pad = g.constant(Array2::zeros((1, 4)));
            let o = c.forward(&mut g, &st, pad);
            g.value(o).to_owned()
        };
        let mut stacked = Array2::from_elem((10, 4), 99.0);
        stacked.slice_mut(ndarray::s![0..5, ..]).assign(&a);
        stacked.slice_mut(ndarray::s![5..8, ..]).assign(&b);
        let mut g = Graph::new(&store);
        let st = SequenceStates {
            values: g.constant(stacked),
            layout: Layout {
                spans: vec![0..5, 5..10],
                mask: [vec![true; 8], vec![false; 2]].concat(),
                segment_starts: vec![vec![0], vec![0]],
            },
        };
        let pad = g.constant(Array2::zeros((1, 4)));
        let o = c.forward(&mut g, &st, pad);
        let ov = g.value(o);
        let (ea, eb) = (single(a), single(b));
        for j in 0..4 {
            assert!((ov[[0, j]] - ea[[0, j]]).abs() < 1e-12);
            assert!((ov[[1, j]] - eb[[0, j]]).abs() < 1e-12);
        }
    }
}
