//! Reverse-mode automatic differentiation over row-major matrices.
//!
//! A [`Graph`] records every operation applied during a forward pass. All
//! values are 2-D; vectors are `[1 × n]` rows and scalars are `[1 × 1]`.
//! Parameters are referenced from a borrowed [`ParamStore`] and are never
//! copied into the tape. [`Graph::backward`] returns gradients for the
//! parameters only.

mod attention;
pub mod check;
#[cfg(test)]
mod tests;

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::{Gradients, ParamId, ParamStore};
use crate::scalar::Scalar;

pub use attention::AttnBlock;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// One supervised target of [`Graph::softmax_xent`].
#[derive(Clone, Copy, Debug)]
pub struct XentTarget<T> {
    pub row: usize,
    pub class: usize,
    pub weight: T,
}

enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var),
    MulConst(Var, Array2<T>),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Unfold {
        x: Var,
        starts: Vec<usize>,
        width: usize,
    },
    SegmentMax {
        x: Var,
        argmax: Array2<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<T>,
        inv_std: Vec<T>,
    },
    Attention(attention::AttnTape<T>),
    SoftmaxXent {
        logits: Var,
        targets: Vec<XentTarget<T>>,
        probs: Vec<Vec<T>>,
    },
    SumAll(Var),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
}

struct DropoutState {
    rate: f64,
    rng: ChaCha8Rng,
}

/// Tape for one forward/backward pass.
pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
    dropout: Option<DropoutState>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Evaluation graph: dropout disabled.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            dropout: None,
        }
    }

    /// Training graph with dropout at `rate`, masks drawn from `seed`.
    pub fn with_dropout(params: &'p ParamStore<T>, rate: f64, seed: u64) -> Self {
        let mut g = Self::new(params);
        if rate > 0.0 {
            g.dropout = Some(DropoutState {
                rate,
                rng: ChaCha8Rng::seed_from_u64(seed),
            });
        }
        g
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> ArrayView2<'_, T> {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.params.get(*id).view(),
            _ => self.nodes[v.0].value.view(),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Value of a `[1 × 1]` node.
    pub fn scalar(&self, v: Var) -> T {
        let x = self.value(v);
        assert_eq!(x.dim(), (1, 1), "not a scalar node");
        x[[0, 0]]
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let v = self.push(Array2::zeros((0, 0)), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `x + b` with `b` a `[1 × n]` row broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let out = &self.value(x) + &self.value(b);
        self.push(out, Op::AddBias(x, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let out = &self.value(a) + &self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let out = &self.value(a) - &self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let out = &self.value(a) * &self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).mapv(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).mapv(|v| v + c);
        self.push(out, Op::Offset(x))
    }

    /// Elementwise product with a constant (non-differentiable) matrix.
    pub fn mul_const(&mut self, x: Var, m: Array2<T>) -> Var {
        let out = &self.value(x) * &m;
        self.push(out, Op::MulConst(x, m))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(T::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(T::exp);
        self.push(out, Op::Exp(x))
    }

    /// Inverted dropout. Identity on evaluation graphs.
    pub fn dropout(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let Some(state) = self.dropout.as_mut() else {
            return x;
        };
        let keep = 1.0 - state.rate;
        let scale = T::c(1.0 / keep);
        let mask = Array2::from_shape_simple_fn((r, c), || {
            if state.rng.random::<f64>() < keep {
                scale
            } else {
                T::zero()
            }
        });
        self.mul_const(x, mask)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Rows `idx` of `x`, in order; repeated indices allowed.
    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let out = self.value(x).select(Axis(0), &idx);
        self.push(out, Op::GatherRows(x, idx))
    }

    pub fn slice_rows(&mut self, x: Var, rows: Range<usize>) -> Var {
        self.gather_rows(x, rows.collect())
    }

    /// Sliding windows: output row `r` is rows `starts[r] .. starts[r] + width` of `x`
    /// laid side by side, giving `[starts.len() × width·cols]`.
    pub fn unfold(&mut self, x: Var, starts: Vec<usize>, width: usize) -> Var {
        let xv = self.value(x);
        let h = xv.ncols();
        let mut out = Array2::zeros((starts.len(), width * h));
        for (r, &st) in starts.iter().enumerate() {
            for j in 0..width {
                out.slice_mut(s![r, j * h..(j + 1) * h])
                    .assign(&xv.row(st + j));
            }
        }
        self.push(out, Op::Unfold { x, starts, width })
    }

    /// Column-wise max over each row range, giving `[segments.len() × cols]`.
    /// Ties resolve to the earliest row.
    pub fn segment_max(&mut self, x: Var, segments: &[Range<usize>]) -> Var {
        let xv = self.value(x);
        let c = xv.ncols();
        let mut out = Array2::zeros((segments.len(), c));
        let mut argmax = Array2::zeros((segments.len(), c));
        for (si, seg) in segments.iter().enumerate() {
            assert!(!seg.is_empty(), "segment_max over an empty segment");
            for col in 0..c {
                let mut best = seg.start;
                for r in seg.clone() {
                    if xv[[r, col]] > xv[[best, col]] {
                        best = r;
                    }
                }
                out[[si, col]] = xv[[best, col]];
                argmax[[si, col]] = best;
            }
        }
        self.push(out, Op::SegmentMax { x, argmax })
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (`[1 × n]`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let xv = self.value(x);
        let (rows, n) = xv.dim();
        let nf = T::from_usize_lossy(n);
        let mut xhat = Array2::zeros((rows, n));
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in xv.outer_iter().enumerate() {
            let mean = row.sum() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (dst, &v) in xhat.row_mut(r).iter_mut().zip(row.iter()) {
                *dst = (v - mean) * inv;
            }
        }
        let out = &(&xhat * &self.value(gamma)) + &self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head scaled dot-product attention over projected `q`, `k`, `v`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        blocks: Vec<AttnBlock>,
    ) -> Var {
        let (out, tape) =
            attention::forward(self.value(q), self.value(k), self.value(v), q, k, v, heads, blocks);
        self.push(out, Op::Attention(tape))
    }

    /// Weighted sum of token cross-entropies: `Σ w · (logsumexp(row) − row[class])`.
    pub fn softmax_xent(&mut self, logits: Var, targets: Vec<XentTarget<T>>) -> Var {
        let lv = self.value(logits);
        let mut total = T::zero();
        let mut probs = Vec::with_capacity(targets.len());
        for t in &targets {
            let row = lv.row(t.row);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&x| (x - m).exp()).sum();
            let lse = m + z.ln();
            total += t.weight * (lse - row[t.class]);
            probs.push(row.iter().map(|&x| (x - lse).exp()).collect());
        }
        let out = Array2::from_elem((1, 1), total);
        self.push(
            out,
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            },
        )
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(x).sum());
        self.push(out, Op::SumAll(x))
    }

    /// Gradients of the scalar `loss` with respect to every parameter reached.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Array2<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients::zeros_like(self.params);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::AddBias(x, b) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.mapv(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.value(*b);
                    let db = &g * &self.value(*a);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g.mapv(|v| v * *c)),
                Op::Offset(x) => acc(&mut grads, *x, g),
                Op::MulConst(x, m) => acc(&mut grads, *x, &g * m),
                Op::Relu(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx).and(&self.value(*x)).for_each(|d, &v| {
                        if v <= T::zero() {
                            *d = T::zero();
                        }
                    });
                    acc(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= T::one() - y * y);
                    acc(&mut grads, *x, dx);
                }
                Op::Exp(x) => acc(&mut grads, *x, &g * &node.value),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        acc(&mut grads, p, g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        acc(&mut grads, p, g.slice(s![off..off + h, ..]).to_owned());
                        off += h;
                    }
                }
                Op::GatherRows(x, idx) => {
                    let mut dx = Array2::zeros(self.shape(*x));
                    for (r, &src) in idx.iter().enumerate() {
                        let mut dst = dx.row_mut(src);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Unfold { x, starts, width } => {
                    let (rows, h) = self.shape(*x);
                    let mut dx = Array2::zeros((rows, h));
                    for (r, &st) in starts.iter().enumerate() {
                        for j in 0..*width {
                            let mut dst = dx.row_mut(st + j);
                            dst += &g.slice(s![r, j * h..(j + 1) * h]);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::SegmentMax { x, argmax } => {
                    let mut dx = Array2::zeros(self.shape(*x));
                    for ((si, col), &r) in argmax.indexed_iter() {
                        dx[[r, col]] += g[[si, col]];
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * &gv;
                    let n = xhat.ncols();
                    let nf = T::from_usize_lossy(n);
                    let mut dx = Array2::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_d: T = dh.sum();
                        let sum_dx: T = dh.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum();
                        let inv = inv_std[r];
                        for c in 0..n {
                            dx[[r, c]] = inv / nf * (nf * dh[c] - sum_d - xh[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *gamma, dgamma);
                    acc(&mut grads, *beta, dbeta);
                    acc(&mut grads, *x, dx);
                }
                Op::Attention(tape) => {
                    let (dq, dk, dv) = attention::backward(
                        tape,
                        &g,
                        self.value(tape.q),
                        self.value(tape.k),
                        self.value(tape.v),
                    );
                    acc(&mut grads, tape.q, dq);
                    acc(&mut grads, tape.k, dk);
                    acc(&mut grads, tape.v, dv);
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    probs,
                } => {
                    let up = g[[0, 0]];
                    let mut dl = Array2::zeros(self.shape(*logits));
                    for (t, p) in targets.iter().zip(probs) {
                        let w = up * t.weight;
                        let mut row = dl.row_mut(t.row);
                        for (d, &pv) in row.iter_mut().zip(p) {
                            *d += w * pv;
                        }
                        row[t.class] -= w;
                    }
                    acc(&mut grads, *logits, dl);
                }
                Op::SumAll(x) => {
                    let up = g[[0, 0]];
                    acc(&mut grads, *x, Array2::from_elem(self.shape(*x), up));
                }
            }
        }
        out
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
