//! Label predictors: two separate encoders, one encoder over the concatenated
//! pair, or a hypothesis-only encoder.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var, XentTarget};
use crate::concvae::bos_rows;
use crate::corpus::{Batch, PaddedSeqs};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::transformer::{count, Encoder, Init, Linear, ModelConfig, TokenInput};

pub const CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Separate,
    Mixture,
    PremiseAgnostic,
}

impl ClassifierKind {
    pub fn needs_premise(self) -> bool {
        self != Self::PremiseAgnostic
    }
}

#[derive(Clone, Debug)]
pub struct Classifier {
    pub kind: ClassifierKind,
    encoders: Vec<Encoder>,
    head: Linear,
    abs_diff: bool,
}

impl Classifier {
    /// `abs_diff` swaps the `u − v` feature block for `|u − v|` (separate only).
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, kind: ClassifierKind, cfg: &ModelConfig, abs_diff: bool) -> Self {
        let h = cfg.hidden;
        let (encoders, head_in) = match kind {
            ClassifierKind::Separate => (
                vec![
                    Encoder::new(init, "premise_encoder", cfg),
                    Encoder::new(init, "hypothesis_encoder", cfg),
                ],
                4 * h,
            ),
            ClassifierKind::Mixture | ClassifierKind::PremiseAgnostic => (vec![Encoder::new(init, "encoder", cfg)], h),
        };
        let head = Linear::new(init, "head", head_in, CLASSES);
        Self {
            kind,
            encoders,
            head,
            abs_diff,
        }
    }

    pub fn param_count(kind: ClassifierKind, cfg: &ModelConfig) -> usize {
        let h = cfg.hidden;
        match kind {
            ClassifierKind::Separate => 2 * count::encoder(cfg) + count::linear(4 * h, CLASSES),
            _ => count::encoder(cfg) + count::linear(h, CLASSES),
        }
    }

    /// Label logits `[B × 3]`.
    pub fn logits<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        premise: Option<&PaddedSeqs>,
        hypothesis: &PaddedSeqs,
    ) -> Result<Var> {
        let premise = match (self.kind.needs_premise(), premise) {
            (true, None) => return Err(Error::MissingInput("premise")),
            (_, p) => p,
        };
        let features = match self.kind {
            ClassifierKind::Separate => {
                let p = premise.expect("checked above");
                let u = self.encoders[0].forward(g, &TokenInput::from_padded(p))?;
                let u = bos_rows(g, &u);
                let v = self.encoders[1].forward(g, &TokenInput::from_padded(hypothesis))?;
                let v = bos_rows(g, &v);
                let diff = g.sub(u, v);
                let diff = if self.abs_diff { abs(g, diff) } else { diff };
                let prod = g.mul(u, v);
                g.concat_cols(&[u, v, diff, prod])
            }
            ClassifierKind::Mixture => {
                let p = premise.expect("checked above");
                let x = self.encoders[0].forward(g, &TokenInput::pairs(p, hypothesis))?;
                bos_rows(g, &x)
            }
            ClassifierKind::PremiseAgnostic => {
                let x = self.encoders[0].forward(g, &TokenInput::from_padded(hypothesis))?;
                bos_rows(g, &x)
            }
        };
        Ok(self.head.forward(g, features))
    }

    pub fn batch_logits<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch) -> Result<Var> {
        self.logits(g, Some(&batch.premise), &batch.hypothesis)
    }

    /// Logits for one pair, as plain numbers.
    pub fn classify<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: Option<&[u32]>,
        hypothesis: Option<&[u32]>,
    ) -> Result<[f64; CLASSES]> {
        let hypothesis = hypothesis.ok_or(Error::MissingInput("hypothesis"))?;
        let mut g = Graph::new(params);
        let p = premise.map(|p| PaddedSeqs::from_rows([p]));
        let h = PaddedSeqs::from_rows([hypothesis]);
        let l = self.logits(&mut g, p.as_ref(), &h)?;
        let row = g.value(l);
        Ok(std::array::from_fn(|j| row[[0, j]].as_f64()))
    }
}

/// `|x|` as `x ⊙ sign(x)` with the sign held constant.
fn abs<T: Scalar>(g: &mut Graph<'_, T>, x: Var) -> Var {
    let sign: Array2<T> = g.value(x).mapv(|v| if v < T::zero() { -T::one() } else { T::one() });
    g.mul_const(x, sign)
}

/// Mean cross-entropy of `[B × 3]` logits against gold labels.
pub fn classification_loss<T: Scalar>(g: &mut Graph<'_, T>, logits: Var, labels: &[usize]) -> Var {
    let w = T::c(1.0 / labels.len() as f64);
    let targets = labels
        .iter()
        .enumerate()
        .map(|(row, &class)| {
            assert!(class < CLASSES, "label id {class} out of range");
            XentTarget { row, class, weight: w }
        })
        .collect();
    g.softmax_xent(logits, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::check::check_gradients;
    use crate::testutil::{random_examples, tiny_config};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build<T: Scalar>(kind: ClassifierKind, cfg: &ModelConfig, seed: u64) -> (ParamStore<T>, Classifier) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Classifier::new(&mut Init::new(&mut store, &mut rng), kind, cfg, false);
        (store, c)
    }

    #[test]
    fn loss_examples() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let uniform = g.constant(array![[0.0, 0.0, 0.0]]);
        let l = classification_loss(&mut g, uniform, &[1]);
        assert!((g.scalar(l) - 3f64.ln()).abs() < 1e-12);
        let sure = g.constant(array![[10.0, -10.0, -10.0]]);
        let l = classification_loss(&mut g, sure, &[0]);
        assert!(g.scalar(l) < 1e-4 && g.scalar(l) > 0.0);
        let two = g.constant(array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]]);
        let batch = classification_loss(&mut g, two, &[2, 0]);
        let a = g.constant(array![[1.0, 2.0, 0.5]]);
        let la = classification_loss(&mut g, a, &[2]);
        let b = g.constant(array![[0.0, -1.0, 3.0]]);
        let lb = classification_loss(&mut g, b, &[0]);
        assert!((g.scalar(batch) - 0.5 * (g.scalar(la) + g.scalar(lb))).abs() < 1e-12);
    }

    #[test]
    fn counts_match_store() {
        let cfg = tiny_config(40);
        for kind in [ClassifierKind::Separate, ClassifierKind::Mixture, ClassifierKind::PremiseAgnostic] {
            let (store, _) = build::<f32>(kind, &cfg, 0);
            assert_eq!(store.scalar_count(), Classifier::param_count(kind, &cfg));
        }
        let mix = Classifier::param_count(ClassifierKind::Mixture, &cfg);
        let sep = Classifier::param_count(ClassifierKind::Separate, &cfg);
        assert_eq!(sep, 2 * mix + 6 * cfg.hidden - 3);
    }

    #[test]
    fn separate_difference_block_vanishes_on_equal_inputs() {
        let cfg = tiny_config(40);
        let (store, c) = build::<f64>(ClassifierKind::Separate, &cfg, 1);
        // share weights between the two encoders so u == v
        let mut store = store;
        let names: Vec<String> = store
            .iter()
            .filter(|(n, _)| n.starts_with("premise_encoder."))
            .map(|(n, _)| n.to_string())
            .collect();
        for n in names {
            let src = store.get(store.find(&n).unwrap()).clone();
            let dst = store.find(&n.replacen("premise_encoder", "hypothesis_encoder", 1)).unwrap();
            *store.get_mut(dst) = src;
        }
        let seq = PaddedSeqs::from_rows([&[2u32, 5, 6, 3][..]]);
        let mut g = Graph::new(&store);
        let u = c.encoders[0].forward(&mut g, &TokenInput::from_padded(&seq)).unwrap();
        let u = bos_rows(&mut g, &u);
        let v = c.encoders[1].forward(&mut g, &TokenInput::from_padded(&seq)).unwrap();
        let v = bos_rows(&mut g, &v);
        let d = g.sub(u, v);
        assert!(g.value(d).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn agnostic_ignores_premise_and_others_require_it() {
        let cfg = tiny_config(40);
        let (store, c) = build::<f64>(ClassifierKind::PremiseAgnostic, &cfg, 2);
        let h: &[u32] = &[2, 7, 8, 3];
        let a = c.classify(&store, Some(&[2, 5, 3]), Some(h)).unwrap();
        let b = c.classify(&store, Some(&[2, 9, 10, 11, 3]), Some(h)).unwrap();
        let n = c.classify(&store, None, Some(h)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, n);
        assert!(matches!(c.classify(&store, None, None), Err(Error::MissingInput("hypothesis"))));
        let (store, c) = build::<f64>(ClassifierKind::Mixture, &cfg, 2);
        assert!(matches!(c.classify(&store, None, Some(h)), Err(Error::MissingInput("premise"))));
    }

    #[test]
    fn mixture_reads_first_position_of_pair() {
        let cfg = tiny_config(40);
        let (store, c) = build::<f64>(ClassifierKind::Mixture, &cfg, 3);
        let input = TokenInput::pairs(
            &PaddedSeqs::from_rows([&[2u32, 5, 3][..]]),
            &PaddedSeqs::from_rows([&[2u32, 6, 7, 3][..]]),
        );
        assert_eq!(input.ids, vec![2, 5, 3, 2, 6, 7, 3]);
        assert_eq!(input.positions, vec![0, 1, 2, 0, 1, 2, 3]);
        let mut g = Graph::new(&store);
        let x = c.encoders[0].forward(&mut g, &input).unwrap();
        let first = g.gather_rows(x.values, vec![0]);
        let direct = c.head.forward(&mut g, first);
        let via = c
            .classify(&store, Some(&[2, 5, 3]), Some(&[2, 6, 7, 3]))
            .unwrap();
        for j in 0..3 {
            assert!((g.value(direct)[[0, j]] - via[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_gradients_match_finite_differences() {
        let cfg = tiny_config(20);
        let ex = random_examples(3, 1, 20, 4);
        let idx: Vec<usize> = (0..3).collect();
        let batch = Batch::from_examples(&ex, &idx);
        for (kind, abs_diff) in [(ClassifierKind::Separate, false), (ClassifierKind::Separate, true), (ClassifierKind::Mixture, false)] {
            let mut store = ParamStore::<f64>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let c = Classifier::new(&mut Init::new(&mut store, &mut rng), kind, &cfg, abs_diff);
            let reports = check_gradients(
                &store,
                |g| {
                    let l = c.batch_logits(g, &batch).unwrap();
                    classification_loss(g, l, &batch.labels)
                },
                // a smaller step keeps the probe clear of ReLU kinks
                1e-6,
                3,
                1e-7,
            );
            for r in &reports {
                assert!(r.max_rel_error <= 1e-3, "{kind:?} {} rel {} a {} n {}", r.name, r.max_rel_error, r.worst_analytic, r.worst_numeric);
            }
        }
    }
}
