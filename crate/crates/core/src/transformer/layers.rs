use rand_chacha::ChaCha8Rng;

use crate::autograd::{AttnBlock, Graph, Var};
use crate::params::{ones, xavier_uniform, zeros, ParamId, ParamStore};
use crate::scalar::Scalar;

/// Registers parameters under a dotted name prefix.
pub struct Init<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Init<'_, T> {
    pub fn new<'a>(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Init<'a, T> {
        Init { store, rng }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = init
            .store
            .register(format!("{name}.w"), xavier_uniform(init.rng, fan_in, fan_out));
        let b = init.store.register(format!("{name}.b"), zeros(1, fan_out));
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_bias(y, b)
    }

    pub fn param_count(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub(crate) const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, dim: usize) -> Self {
        let gamma = init.store.register(format!("{name}.gamma"), ones(1, dim));
        let beta = init.store.register(format!("{name}.beta"), zeros(1, dim));
        Self { gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, T::c(LN_EPS))
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, hidden: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(init, &format!("{name}.q"), hidden, hidden),
            k: Linear::new(init, &format!("{name}.k"), hidden, hidden),
            v: Linear::new(init, &format!("{name}.v"), hidden, hidden),
            o: Linear::new(init, &format!("{name}.o"), hidden, hidden),
            heads,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        queries: Var,
        memory: Var,
        blocks: Vec<AttnBlock>,
    ) -> Var {
        let q = self.q.forward(g, queries);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let a = g.attention(q, k, v, self.heads, blocks);
        self.o.forward(g, a)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, hidden: usize, ffn: usize) -> Self {
        Self {
            up: Linear::new(init, &format!("{name}.up"), hidden, ffn),
            down: Linear::new(init, &format!("{name}.down"), ffn, hidden),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        let h = self.up.forward(g, x);
        let h = g.relu(h);
        let h = g.dropout(h);
        self.down.forward(g, h)
    }
}
