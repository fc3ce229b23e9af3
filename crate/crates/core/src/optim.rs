use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::params::{Gradients, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moments are kept per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Array2<T>>,
    pub v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = |p: &Array2<T>| Array2::zeros(p.dim());
        Self {
            config,
            step: 0,
            m: params.iter().map(|(_, p)| zeros(p)).collect(),
            v: params.iter().map(|(_, p)| zeros(p)).collect(),
        }
    }

    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::c(c.beta1), T::c(c.beta2));
        let bc1 = T::c(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::c(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::c(c.lr);
        let eps = T::c(c.eps);
        for ((value, (m, v)), g) in params
            .values_mut()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .zip(grads.grads.iter())
        {
            let Some(g) = g else { continue };
            Zip::from(value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::<f64>::new();
        let id = store.register("x", array![[1.0, -2.0]]);
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &store);
        let grads = {
            let mut g = Graph::new(&store);
            let x = g.param(id);
            let sq = g.mul(x, x);
            let l = g.sum_all(sq);
            g.backward(l)
        };
        opt.update(&mut store, &grads);
        let x = store.get(id);
        assert!((x[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((x[[0, 1]] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.register("x", array![[3.0]]);
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..Default::default() }, &store);
        for _ in 0..500 {
            let grads = {
                let mut g = Graph::new(&store);
                let x = g.param(id);
                let y = g.offset(x, -1.0);
                let sq = g.mul(y, y);
                let l = g.sum_all(sq);
                g.backward(l)
            };
            opt.update(&mut store, &grads);
        }
        assert!((store.get(id)[[0, 0]] - 1.0).abs() < 1e-2);
    }
}
