use ndarray::Array2;
use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::standard_normal;
use crate::scalar::Scalar;

/// Diagonal Gaussian over the latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                got: log_std.len(),
            });
        }
        Ok(Self { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    /// `mean + k·std`, componentwise.
    pub fn shifted(&self, k: f64) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, l)| m + k * l.exp())
            .collect()
    }

    /// Log density at `z`.
    pub fn log_pdf(&self, z: &[f64]) -> f64 {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(z)
            .map(|((m, l), x)| {
                let u = (x - m) / l.exp();
                -0.5 * u * u - l - half_ln_2pi
            })
            .sum()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let eps: Array2<f64> = standard_normal(rng, 1, self.dim());
        reparameterize(self, eps.as_slice().expect("contiguous")).expect("matching dims")
    }
}

/// `z = mean + exp(log_std) ⊙ eps`.
pub fn reparameterize(g: &LatentGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != g.dim() {
        return Err(Error::Dimension {
            expected: g.dim(),
            got: eps.len(),
        });
    }
    Ok(g.mean
        .iter()
        .zip(&g.log_std)
        .zip(eps)
        .map(|((m, l), e)| m + l.exp() * e)
        .collect())
}

/// Closed-form `KL(q || p)` summed over dimensions.
pub fn kl_divergence(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Dimension {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (mq, lq, mp, lp) = (q.mean[i], q.log_std[i], p.mean[i], p.log_std[i]);
        let var_q = (2.0 * lq).exp();
        let var_p = (2.0 * lp).exp();
        let d = mq - mp;
        kl += 0.5 * ((var_q + d * d) / var_p - 1.0 + 2.0 * (lp - lq));
    }
    Ok(kl)
}

/// Row-stacked Gaussian parameters inside a graph, `[S × d_z]` each.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub log_std: Var,
}

impl GaussianVars {
    /// Row `i` read back as a plain Gaussian.
    pub fn row<T: Scalar>(&self, g: &Graph<'_, T>, i: usize) -> LatentGaussian {
        let read = |v: Var| g.value(v).row(i).iter().map(|x| x.as_f64()).collect();
        LatentGaussian {
            mean: read(self.mean),
            log_std: read(self.log_std),
        }
    }
}

pub fn reparameterize_var<T: Scalar>(g: &mut Graph<'_, T>, q: GaussianVars, eps: Array2<T>) -> Var {
    let std = g.exp(q.log_std);
    let noise = g.mul_const(std, eps);
    g.add(q.mean, noise)
}

/// `Σ_rows Σ_dims KL(q_row || p_row)` as a `[1 × 1]` node.
pub fn kl_var<T: Scalar>(g: &mut Graph<'_, T>, q: GaussianVars, p: GaussianVars) -> Var {
    let half = T::c(0.5);
    // 0.5·exp(2(lq − lp)) + 0.5·((μq − μp)·exp(−lp))² − 0.5 + lp − lq
    let dl = g.sub(q.log_std, p.log_std);
    let ratio = g.scale(dl, T::c(2.0));
    let ratio = g.exp(ratio);
    let ratio = g.scale(ratio, half);
    let dm = g.sub(q.mean, p.mean);
    let neg_lp = g.scale(p.log_std, -T::one());
    let inv_sp = g.exp(neg_lp);
    let u = g.mul(dm, inv_sp);
    let u2 = g.mul(u, u);
    let u2 = g.scale(u2, half);
    let a = g.add(ratio, u2);
    let a = g.sub(a, dl);
    let a = g.offset(a, -half);
    g.sum_all(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use ndarray::array;
    use proptest::prelude::*;

    fn gauss(mean: f64, var: f64) -> LatentGaussian {
        LatentGaussian::new(vec![mean], vec![0.5 * var.ln()]).unwrap()
    }

    #[test]
    fn kl_hand_cases() {
        let p = gauss(0.0, 1.0);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert!((kl_divergence(&gauss(1.0, 1.0), &p).unwrap() - 0.5).abs() < 1e-12);
        let expect = 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((kl_divergence(&gauss(0.0, 4.0), &p).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.8069).abs() < 1e-4);
    }

    #[test]
    fn reparameterize_examples() {
        let g = LatentGaussian::new(vec![1.0], vec![0.5]).unwrap();
        let z = reparameterize(&g, &[-1.0]).unwrap();
        assert!((z[0] - (1.0 - 0.5f64.exp())).abs() < 1e-12);
        assert!((z[0] + 0.6487).abs() < 1e-4);
        assert_eq!(reparameterize(&g, &[0.0]).unwrap(), vec![1.0]);
        let s = LatentGaussian::standard(3);
        assert_eq!(reparameterize(&s, &[0.3, -2.0, 1.5]).unwrap(), vec![0.3, -2.0, 1.5]);
        assert!(reparameterize(&s, &[0.0]).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(kl_divergence(&LatentGaussian::standard(2), &LatentGaussian::standard(3)).is_err());
        assert!(LatentGaussian::new(vec![0.0], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_identity(
            m in proptest::collection::vec(-3.0f64..3.0, 4),
            l in proptest::collection::vec(-0.99f64..0.99, 4),
            m2 in proptest::collection::vec(-3.0f64..3.0, 4),
            l2 in proptest::collection::vec(-0.99f64..0.99, 4),
        ) {
            let q = LatentGaussian::new(m.clone(), l.clone()).unwrap();
            let p = LatentGaussian::new(m2, l2).unwrap();
            prop_assert!(kl_divergence(&q, &p).unwrap() >= -1e-12);
            prop_assert!(kl_divergence(&q, &q).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn graph_kl_matches_closed_form() {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let qm = array![[0.3, -1.0], [2.0, 0.1]];
        let ql = array![[0.2, -0.5], [0.0, 0.7]];
        let pm = array![[-0.4, 0.0], [1.0, 1.0]];
        let pl = array![[0.1, 0.3], [-0.6, 0.0]];
        let q = GaussianVars {
            mean: g.constant(qm.clone()),
            log_std: g.constant(ql.clone()),
        };
        let p = GaussianVars {
            mean: g.constant(pm.clone()),
            log_std: g.constant(pl.clone()),
        };
        let kl = kl_var(&mut g, q, p);
        let mut expect = 0.0;
        for r in 0..2 {
            expect += kl_divergence(&q.row(&g, r), &p.row(&g, r)).unwrap();
        }
        assert!((g.scalar(kl) - expect).abs() < 1e-12);
        let z = reparameterize_var(&mut g, q, array![[1.0, -1.0], [0.0, 2.0]]);
        let zv = g.value(z);
        assert!((zv[[0, 0]] - (0.3 + 0.2f64.exp())).abs() < 1e-12);
        assert!((zv[[1, 1]] - (0.1 + 2.0 * 0.7f64.exp())).abs() < 1e-12);
    }
}
