use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autograd::check::check_gradients;
use crate::corpus::{Batch, EncodedExample};
use crate::testutil::{random_examples, tiny_config};

fn build<T: Scalar>(cfg: &ModelConfig, cvae: &CvaeConfig, seed: u64) -> (ParamStore<T>, Cvae) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Cvae::new(&mut Init::new(&mut store, &mut rng), cfg, cvae);
    (store, m)
}

fn batch(examples: &[EncodedExample]) -> Batch {
    let idx: Vec<usize> = (0..examples.len()).collect();
    Batch::from_examples(examples, &idx)
}

#[test]
fn param_count_matches_store() {
    let cfg = tiny_config(50);
    for pooling in [Pooling::Concoder, Pooling::Bos] {
        for latent_dim in [None, Some(8)] {
            let c = CvaeConfig {
                pooling,
                latent_dim,
                ..Default::default()
            };
            let (store, _) = build::<f32>(&cfg, &c, 0);
            assert_eq!(store.scalar_count(), Cvae::param_count(&cfg, &c));
        }
    }
    let base = ModelConfig::base(30_000);
    let with = Cvae::param_count(&base, &CvaeConfig::default());
    let without = Cvae::param_count(
        &base,
        &CvaeConfig {
            pooling: Pooling::Bos,
            ..Default::default()
        },
    );
    assert_eq!(with - without, count::concoder(512));
}

#[test]
fn memory_gains_one_position() {
    let cfg = tiny_config(50);
    let (store, m) = build::<f64>(&cfg, &CvaeConfig::default(), 1);
    let ex = random_examples(3, 1, 50, 2);
    let b = batch(&ex);
    let mut g = Graph::new(&store);
    let x_h = m.encode_pairs(&mut g, &b.premise, &b.hypothesis).unwrap();
    let z = g.constant(Array2::ones((3, 16)));
    let mem = m.memory(&mut g, z, &x_h);
    assert_eq!(mem.layout.sequences(), 3);
    for i in 0..3 {
        assert_eq!(mem.layout.real_len(i), x_h.layout.real_len(i) + 1);
        assert_eq!(mem.layout.spans[i].len(), x_h.layout.spans[i].len() + 1);
        let first = mem.layout.first_row(i);
        assert!(mem.layout.mask[first]);
        assert!(g.value(mem.values).row(first).iter().all(|&v| v == 1.0));
    }
}

#[test]
fn zero_prior_network_gives_standard_normal() {
    let cfg = tiny_config(50);
    let (mut store, m) = build::<f64>(&cfg, &CvaeConfig::default(), 3);
    for name in ["prior.mean.w", "prior.mean.b", "prior.log_std.w", "prior.log_std.b"] {
        let id = store.find(name).unwrap();
        store.get_mut(id).fill(0.0);
    }
    let mut g = Graph::new(&store);
    let (prior, _) = m.prior_single(&mut g, &[2, 5, 6, 3], &[2, 7, 3]).unwrap();
    assert_eq!(prior, LatentGaussian::standard(16));
}

#[test]
fn log_std_stays_in_tanh_range() {
    let cfg = tiny_config(50);
    let (mut store, m) = build::<f64>(&cfg, &CvaeConfig::default(), 4);
    let id = store.find("prior.log_std.b").unwrap();
    store.get_mut(id).fill(40.0);
    let mut g = Graph::new(&store);
    let (prior, _) = m.prior_single(&mut g, &[2, 5, 3], &[2, 3]).unwrap();
    assert!(prior.log_std.iter().all(|l| *l <= 1.0 && *l > -1.0));
}

fn elbo_objective<'p>(g: &mut Graph<'p, f64>, m: &Cvae, b: &Batch, beta: f64) -> Var {
    let mut noise = Noise::seeded(17);
    let e = m.elbo(g, b, &mut noise).unwrap();
    let kl = g.scale(e.kl, beta);
    g.add(e.reconstruction, kl)
}

#[test]
fn elbo_gradients_match_finite_differences() {
    let cfg = tiny_config(20);
    for pooling in [Pooling::Concoder, Pooling::Bos] {
        let c = CvaeConfig {
            pooling,
            ..Default::default()
        };
        let (store, m) = build::<f64>(&cfg, &c, 5);
        let ex = random_examples(3, 1, 20, 6);
        let b = batch(&ex);
        let reports = check_gradients(&store, |g| elbo_objective(g, &m, &b, 0.7), 1e-5, 4, 1e-7);
        for r in &reports {
            assert!(r.max_rel_error <= 1e-3, "{pooling:?} {} rel {}", r.name, r.max_rel_error);
        }
        assert!(reports.iter().any(|r| r.name.starts_with("posterior.")));
    }
}

#[test]
fn identical_references_match_single_reference() {
    let cfg = tiny_config(50);
    let (store, m) = build::<f64>(&cfg, &CvaeConfig::default(), 7);
    let single = random_examples(4, 1, 50, 8);
    let triple: Vec<EncodedExample> = single
        .iter()
        .map(|e| EncodedExample {
            explanations: vec![e.explanations[0].clone(); 3],
            ..e.clone()
        })
        .collect();
    let eval = |ex: &[EncodedExample]| {
        let mut g = Graph::new(&store);
        let e = m.elbo(&mut g, &batch(ex), &mut Noise::Zero).unwrap();
        (g.scalar(e.reconstruction), g.scalar(e.kl))
    };
    let (r1, k1) = eval(&single);
    let (r3, k3) = eval(&triple);
    assert!((r1 - r3).abs() < 1e-12);
    assert!((k1 - k3).abs() < 1e-12);
}

#[test]
fn interpolation_k0_is_map_and_deterministic() {
    let cfg = tiny_config(50);
    let (store, m) = build::<f32>(&cfg, &CvaeConfig::default(), 9);
    let (p, h) = (&[2, 10, 11, 12, 3][..], &[2, 13, 3][..]);
    let map = m.map_explanation(&store, p, h, 25).unwrap();
    assert_eq!(map, m.map_explanation(&store, p, h, 25).unwrap());
    let outs = m
        .interpolate(&store, p, h, &[-2.0, -1.0, 0.0, 1.0, 2.0], Direction::Diagonal, 25)
        .unwrap();
    assert_eq!(outs.len(), 5);
    assert_eq!(outs[2], map);
    assert!(outs.iter().all(|o| o.len() <= 25));
    let single = m.interpolate(&store, p, h, &[0.0], Direction::Dimension(3), 25).unwrap();
    assert_eq!(single[0], map);
    assert!(m.interpolate(&store, p, h, &[1.0], Direction::Dimension(16), 25).is_err());
}

#[test]
fn latent_dimension_checked() {
    let cfg = tiny_config(50);
    let (store, m) = build::<f64>(&cfg, &CvaeConfig::default(), 10);
    let mut g = Graph::new(&store);
    let (_, x_h) = m.prior_single(&mut g, &[2, 5, 3], &[2, 6, 3]).unwrap();
    assert!(m.decode_with_latent(&mut g, &[0.0; 3], &x_h, 5).is_err());
}

#[test]
fn posterior_depends_on_explanation() {
    let cfg = tiny_config(50);
    let (store, m) = build::<f64>(&cfg, &CvaeConfig::default(), 11);
    let ex = random_examples(1, 1, 50, 12);
    let mut other = ex.clone();
    other[0].explanations[0] = vec![2, 40, 41, 42, 3];
    let mean = |ex: &[EncodedExample]| {
        let b = batch(ex);
        let mut g = Graph::new(&store);
        let x_h = m.encode_pairs(&mut g, &b.premise, &b.hypothesis).unwrap();
        let x_c = m.pool(&mut g, &x_h);
        let y_h = m.encode(&mut g, &b.explanations[0]).unwrap();
        let y_c = m.pool(&mut g, &y_h);
        m.posterior(&mut g, x_c, y_c).row(&g, 0).mean
    };
    assert_ne!(mean(&ex), mean(&other));
}
