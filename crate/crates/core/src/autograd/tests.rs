use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::check::check_gradients;
use super::*;
use crate::params::{normal, ParamStore};

fn assert_grads_ok<F>(store: &ParamStore<f64>, f: F)
where
    F: Fn(&mut Graph<'_, f64>) -> Var,
{
    for r in check_gradients(store, f, 1e-6, 64, 1e-9) {
        assert!(
            r.max_rel_error < 1e-5,
            "{}: rel {} (analytic {}, numeric {})",
            r.name,
            r.max_rel_error,
            r.worst_analytic,
            r.worst_numeric
        );
    }
}

fn random_store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for &(name, r, c) in shapes {
        s.register(name, normal(&mut rng, r, c, 1.0));
    }
    s
}

#[test]
fn elementwise_and_matmul_gradients() {
    let s = random_store(&[("a", 3, 4), ("b", 4, 2), ("c", 3, 2), ("bias", 1, 2)], 1);
    assert_grads_ok(&s, |g| {
        let a = g.param(ParamId(0));
        let b = g.param(ParamId(1));
        let c = g.param(ParamId(2));
        let bias = g.param(ParamId(3));
        let ab = g.matmul(a, b);
        let ab = g.add_bias(ab, bias);
        let t = g.tanh(ab);
        let m = g.mul(t, c);
        let e = g.exp(c);
        let d = g.sub(m, e);
        let d = g.scale(d, 0.7);
        let d = g.offset(d, 2.0);
        let sq = g.mul(d, d);
        g.sum_all(sq)
    });
}

#[test]
fn structural_op_gradients() {
    let s = random_store(&[("x", 5, 3), ("y", 2, 3), ("w", 6, 4)], 2);
    assert_grads_ok(&s, |g| {
        let x = g.param(ParamId(0));
        let y = g.param(ParamId(1));
        let w = g.param(ParamId(2));
        let rows = g.concat_rows(&[x, y]);
        let picked = g.gather_rows(rows, vec![6, 0, 0, 3, 5]);
        let cols = g.concat_cols(&[picked, picked]);
        let proj = g.matmul(cols, w);
        let r = g.relu(proj);
        let sq = g.mul(r, proj);
        g.sum_all(sq)
    });
}

#[test]
fn unfold_and_segment_max_gradients() {
    let s = random_store(&[("x", 7, 3), ("w", 6, 4)], 3);
    assert_grads_ok(&s, |g| {
        let x = g.param(ParamId(0));
        let w = g.param(ParamId(1));
        let u = g.unfold(x, vec![0, 1, 2, 4, 5], 2);
        let c = g.matmul(u, w);
        let m = g.segment_max(c, &[0..3, 3..5]);
        let sq = g.mul(m, m);
        g.sum_all(sq)
    });
}

#[test]
fn layer_norm_gradients() {
    let s = random_store(&[("x", 4, 6), ("gamma", 1, 6), ("beta", 1, 6), ("t", 4, 6)], 4);
    assert_grads_ok(&s, |g| {
        let x = g.param(ParamId(0));
        let gamma = g.param(ParamId(1));
        let beta = g.param(ParamId(2));
        let t = g.param(ParamId(3));
        let y = g.layer_norm(x, gamma, beta, 1e-5);
        let m = g.mul(y, t);
        g.sum_all(m)
    });
}

#[test]
fn attention_gradients_with_masks_and_causality() {
    let s = random_store(&[("q", 7, 4), ("k", 9, 4), ("v", 9, 4), ("t", 7, 4)], 5);
    assert_grads_ok(&s, |g| {
        let q = g.param(ParamId(0));
        let k = g.param(ParamId(1));
        let v = g.param(ParamId(2));
        let t = g.param(ParamId(3));
        let blocks = vec![
            AttnBlock {
                queries: 0..4,
                keys: 0..4,
                key_mask: vec![true, true, true, false],
                causal: true,
            },
            AttnBlock {
                queries: 4..7,
                keys: 4..9,
                key_mask: vec![true, false, true, true, true],
                causal: false,
            },
        ];
        let o = g.attention(q, k, v, 2, blocks);
        let m = g.mul(o, t);
        g.sum_all(m)
    });
}

#[test]
fn softmax_xent_gradients_and_value() {
    let s = random_store(&[("l", 3, 5)], 6);
    assert_grads_ok(&s, |g| {
        let l = g.param(ParamId(0));
        g.softmax_xent(
            l,
            vec![
                XentTarget { row: 0, class: 2, weight: 0.5 },
                XentTarget { row: 2, class: 4, weight: 1.5 },
                XentTarget { row: 2, class: 0, weight: 1.0 },
            ],
        )
    });

    let store = ParamStore::<f64>::new();
    let mut g = Graph::new(&store);
    let l = g.constant(Array2::zeros((1, 3)));
    let loss = g.softmax_xent(l, vec![XentTarget { row: 0, class: 1, weight: 1.0 }]);
    assert!((g.scalar(loss) - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn shared_param_uses_accumulate() {
    let mut s = ParamStore::<f64>::new();
    let id = s.register("x", array![[2.0, -1.0]]);
    let mut g = Graph::new(&s);
    let x = g.param(id);
    let x2 = g.param(id);
    assert_eq!(x, x2);
    let y = g.mul(x, x2);
    let loss = g.sum_all(y);
    let grads = g.backward(loss);
    assert_eq!(grads.get(id).unwrap(), &array![[4.0, -2.0]]);
}

#[test]
fn attention_masked_keys_do_not_leak() {
    let store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q0: Array2<f64> = normal(&mut rng, 3, 4, 1.0);
    let k0: Array2<f64> = normal(&mut rng, 3, 4, 1.0);
    let block = AttnBlock {
        queries: 0..3,
        keys: 0..3,
        key_mask: vec![true, true, false],
        causal: false,
    };
    let run = |kv: Array2<f64>| {
        let mut g = Graph::new(&store);
        let q = g.constant(q0.clone());
        let k = g.constant(kv.clone());
        let v = g.constant(kv);
        let o = g.attention(q, k, v, 2, vec![block.clone()]);
        g.value(o).to_owned()
    };
    let base = run(k0.clone());
    let mut k1 = k0;
    k1.row_mut(2).fill(123.0);
    assert_eq!(base, run(k1));
}

#[test]
fn dropout_is_identity_in_eval_and_seeded_in_train() {
    let store = ParamStore::<f32>::new();
    let x0 = Array2::<f32>::ones((4, 8));
    let mut g = Graph::new(&store);
    let x = g.constant(x0.clone());
    let y = g.dropout(x);
    assert_eq!(x, y);

    let sample = |seed| {
        let mut g = Graph::with_dropout(&store, 0.5, seed);
        let x = g.constant(x0.clone());
        let y = g.dropout(x);
        g.value(y).to_owned()
    };
    assert_eq!(sample(3), sample(3));
    assert!(sample(3).iter().all(|&v| v == 0.0 || v == 2.0));
}
