//! Conditional VAE over explanations: shared encoder, pooled sentence codes,
//! prior/posterior Gaussians and a latent-conditioned decoder.

mod concoder;
mod gaussian;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::corpus::{Batch, PaddedSeqs, PAD};
use crate::error::{Error, Result};
use crate::generation::{greedy, TeacherForcing};
use crate::params::{standard_normal, ParamStore};
use crate::scalar::Scalar;
use crate::transformer::{count, Decoder, Encoder, Init, Layout, Linear, ModelConfig, SequenceStates, TokenInput};

pub use concoder::{Concoder, WIDTHS};
pub use gaussian::{kl_divergence, kl_var, reparameterize, reparameterize_var, GaussianVars, LatentGaussian};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Concoder,
    Bos,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concoder" => Ok(Self::Concoder),
            "bos" | "bos_position" => Ok(Self::Bos),
            other => Err(Error::Config(format!("unknown pooling `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvaeConfig {
    pub pooling: Pooling,
    /// Defaults to the hidden size; other values add a projection to hidden.
    pub latent_dim: Option<usize>,
    pub beta: f64,
    /// Linear KL warm-up length; 0 disables it.
    pub kl_warmup_epochs: f64,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            pooling: Pooling::Concoder,
            latent_dim: None,
            beta: 1.0,
            kl_warmup_epochs: 1.0,
        }
    }
}

/// Source of reparameterization noise.
#[derive(Clone, Debug)]
pub enum Noise {
    /// `eps = 0`: every latent is its distribution mean.
    Zero,
    Seeded(ChaCha8Rng),
}

impl Noise {
    pub fn seeded(seed: u64) -> Self {
        Self::Seeded(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn draw<T: Scalar>(&mut self, rows: usize, cols: usize) -> Array2<T> {
        match self {
            Self::Zero => Array2::zeros((rows, cols)),
            Self::Seeded(rng) => standard_normal(rng, rows, cols),
        }
    }
}

/// Which latent point conditions the decoder when scoring references.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSource {
    PriorMean,
    PosteriorMean,
}

/// Direction of the latent sweep in step two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Every dimension shifted by `k` standard deviations.
    Diagonal,
    /// Only this dimension moves.
    Dimension(usize),
}

/// Loss pieces of one batch, each already averaged over examples and references.
#[derive(Clone, Debug)]
pub struct Elbo {
    pub reconstruction: Var,
    pub kl: Var,
    pub x_h: SequenceStates,
    /// Encoded explanations, one per reference set.
    pub y_h: Vec<SequenceStates>,
}

#[derive(Clone, Debug)]
pub struct Cvae {
    pub encoder: Encoder,
    concoder: Option<Concoder>,
    prior_mean: Linear,
    prior_log_std: Linear,
    post_mean: Linear,
    post_log_std: Linear,
    latent_proj: Option<Linear>,
    pub decoder: Decoder,
    pub hidden: usize,
    pub latent_dim: usize,
}

impl Cvae {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, cfg: &ModelConfig, cvae: &CvaeConfig) -> Self {
        let h = cfg.hidden;
        let dz = cvae.latent_dim.unwrap_or(h);
        let encoder = Encoder::new(init, "encoder", cfg);
        let concoder = match cvae.pooling {
            Pooling::Concoder => Some(Concoder::new(init, "concoder", h)),
            Pooling::Bos => None,
        };
        Self {
            encoder,
            concoder,
            prior_mean: Linear::new(init, "prior.mean", h, dz),
            prior_log_std: Linear::new(init, "prior.log_std", h, dz),
            post_mean: Linear::new(init, "posterior.mean", 2 * h, dz),
            post_log_std: Linear::new(init, "posterior.log_std", 2 * h, dz),
            latent_proj: (dz != h).then(|| Linear::new(init, "latent_proj", dz, h)),
            decoder: Decoder::new(init, "decoder", cfg),
            hidden: h,
            latent_dim: dz,
        }
    }

    pub fn param_count(cfg: &ModelConfig, cvae: &CvaeConfig) -> usize {
        let h = cfg.hidden;
        let dz = cvae.latent_dim.unwrap_or(h);
        let pool = match cvae.pooling {
            Pooling::Concoder => count::concoder(h),
            Pooling::Bos => 0,
        };
        let proj = if dz != h { count::linear(dz, h) } else { 0 };
        count::encoder(cfg)
            + pool
            + 2 * count::linear(h, dz)
            + 2 * count::linear(2 * h, dz)
            + proj
            + count::decoder(cfg)
    }

    pub fn pooling(&self) -> Pooling {
        if self.concoder.is_some() {
            Pooling::Concoder
        } else {
            Pooling::Bos
        }
    }

    /// `x_h`: premise and hypothesis encoded together.
    pub fn encode_pairs<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        premise: &PaddedSeqs,
        hypothesis: &PaddedSeqs,
    ) -> Result<SequenceStates> {
        self.encoder.forward(g, &TokenInput::pairs(premise, hypothesis))
    }

    /// `y_h`: explanations through the same encoder.
    pub fn encode<T: Scalar>(&self, g: &mut Graph<'_, T>, seqs: &PaddedSeqs) -> Result<SequenceStates> {
        self.encoder.forward(g, &TokenInput::from_padded(seqs))
    }

    /// One code per sequence, `[S × hidden]`.
    pub fn pool<T: Scalar>(&self, g: &mut Graph<'_, T>, states: &SequenceStates) -> Var {
        match &self.concoder {
            Some(c) => {
                let pad = self.encoder.embedding.token_row(g, PAD);
                c.forward(g, states, pad)
            }
            None => bos_rows(g, states),
        }
    }

    pub fn prior<T: Scalar>(&self, g: &mut Graph<'_, T>, x_c: Var) -> GaussianVars {
        let mean = self.prior_mean.forward(g, x_c);
        let l = self.prior_log_std.forward(g, x_c);
        GaussianVars {
            mean,
            log_std: g.tanh(l),
        }
    }

    pub fn posterior<T: Scalar>(&self, g: &mut Graph<'_, T>, x_c: Var, y_c: Var) -> GaussianVars {
        let xy = g.concat_cols(&[x_c, y_c]);
        let mean = self.post_mean.forward(g, xy);
        let l = self.post_log_std.forward(g, xy);
        GaussianVars {
            mean,
            log_std: g.tanh(l),
        }
    }

    /// Decoder memory `[z; x_h]`: `z` (`[S × d_z]`) becomes one extra leading
    /// position of each sequence.
    pub fn memory<T: Scalar>(&self, g: &mut Graph<'_, T>, z: Var, x_h: &SequenceStates) -> SequenceStates {
        let z = match &self.latent_proj {
            Some(p) => p.forward(g, z),
            None => z,
        };
        let s = x_h.layout.sequences();
        assert_eq!(g.shape(z).0, s, "one latent row per sequence");
        let source = g.concat_rows(&[z, x_h.values]);
        let mut order = Vec::with_capacity(s + x_h.layout.rows());
        let mut spans = Vec::with_capacity(s);
        let mut mask = Vec::with_capacity(order.capacity());
        for (i, span) in x_h.layout.spans.iter().enumerate() {
            let start = order.len();
            order.push(i);
            mask.push(true);
            order.extend(span.clone().map(|r| s + r));
            mask.extend_from_slice(&x_h.layout.mask[span.clone()]);
            spans.push(start..order.len());
        }
        SequenceStates {
            values: g.gather_rows(source, order),
            layout: Layout {
                segment_starts: vec![vec![0]; s],
                spans,
                mask,
            },
        }
    }

    /// Reconstruction and KL terms. Each reference set gets its own posterior
    /// sample; both terms are means over examples and references.
    pub fn elbo<T: Scalar>(&self, g: &mut Graph<'_, T>, batch: &Batch, noise: &mut Noise) -> Result<Elbo> {
        let b = batch.len();
        let refs = batch.explanations.len();
        let w = 1.0 / (b * refs) as f64;
        let x_h = self.encode_pairs(g, &batch.premise, &batch.hypothesis)?;
        let x_c = self.pool(g, &x_h);
        let prior = self.prior(g, x_c);
        let mut recon = Vec::with_capacity(refs);
        let mut kls = Vec::with_capacity(refs);
        let mut y_hs = Vec::with_capacity(refs);
        for seqs in &batch.explanations {
            let y_h = self.encode(g, seqs)?;
            let y_c = self.pool(g, &y_h);
            let post = self.posterior(g, x_c, y_c);
            let eps = noise.draw(b, self.latent_dim);
            let z = reparameterize_var(g, post, eps);
            let memory = self.memory(g, z, &x_h);
            let tf = TeacherForcing::new(seqs);
            let logits = self.decoder.decode(g, &tf.input, &memory)?;
            recon.push(g.softmax_xent(logits, tf.xent_targets(w)));
            let kl = kl_var(g, post, prior);
            kls.push(g.scale(kl, T::c(w)));
            y_hs.push(y_h);
        }
        Ok(Elbo {
            reconstruction: sum(g, &recon),
            kl: sum(g, &kls),
            x_h,
            y_h: y_hs,
        })
    }

    /// Token negative log-likelihoods `[example][reference][token]` of the gold
    /// references under a fixed latent point.
    pub fn token_nlls<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        batch: &Batch,
        source: LatentSource,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let x_h = self.encode_pairs(g, &batch.premise, &batch.hypothesis)?;
        let x_c = self.pool(g, &x_h);
        let prior_mean = self.prior(g, x_c).mean;
        let mut out = vec![Vec::with_capacity(batch.explanations.len()); batch.len()];
        for seqs in &batch.explanations {
            let z = match source {
                LatentSource::PriorMean => prior_mean,
                LatentSource::PosteriorMean => {
                    let y_h = self.encode(g, seqs)?;
                    let y_c = self.pool(g, &y_h);
                    self.posterior(g, x_c, y_c).mean
                }
            };
            let memory = self.memory(g, z, &x_h);
            let tf = TeacherForcing::new(seqs);
            let logits = self.decoder.decode(g, &tf.input, &memory)?;
            for (i, nll) in tf.token_nlls(g.value(logits)).into_iter().enumerate() {
                out[i].push(nll);
            }
        }
        Ok(out)
    }

    /// Prior for a single premise/hypothesis pair, plus its encoded states.
    pub fn prior_single<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        premise: &[u32],
        hypothesis: &[u32],
    ) -> Result<(LatentGaussian, SequenceStates)> {
        let x_h = self.encoder.forward(g, &TokenInput::from_segments(&[vec![premise, hypothesis]]))?;
        let x_c = self.pool(g, &x_h);
        let prior = self.prior(g, x_c);
        Ok((prior.row(g, 0), x_h))
    }

    /// Greedy decoding conditioned on latent point `z` and single-pair memory `x_h`.
    pub fn decode_with_latent<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        z: &[f64],
        x_h: &SequenceStates,
        max_len: usize,
    ) -> Result<Vec<u32>> {
        if z.len() != self.latent_dim {
            return Err(Error::Dimension {
                expected: self.latent_dim,
                got: z.len(),
            });
        }
        let zv = g.constant(Array2::from_shape_fn((1, z.len()), |(_, j)| T::c(z[j])));
        let memory = self.memory(g, zv, x_h);
        greedy(g, &self.decoder, &memory, max_len)
    }

    /// MAP explanation: decoding at the prior mean.
    pub fn map_explanation<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: &[u32],
        hypothesis: &[u32],
        max_len: usize,
    ) -> Result<Vec<u32>> {
        let mut g = Graph::new(params);
        let (prior, x_h) = self.prior_single(&mut g, premise, hypothesis)?;
        self.decode_with_latent(&mut g, &prior.mean, &x_h, max_len)
    }

    /// One decode per `k`, at `mean + k·std` along `direction`, in `k` order.
    pub fn interpolate<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        premise: &[u32],
        hypothesis: &[u32],
        ks: &[f64],
        direction: Direction,
        max_len: usize,
    ) -> Result<Vec<Vec<u32>>> {
        let mut g = Graph::new(params);
        let (prior, x_h) = self.prior_single(&mut g, premise, hypothesis)?;
        ks.iter()
            .map(|&k| {
                let z = latent_point(&prior, k, direction)?;
                self.decode_with_latent(&mut g, &z, &x_h, max_len)
            })
            .collect()
    }
}

/// `mean + k·std` along `direction`.
pub fn latent_point(prior: &LatentGaussian, k: f64, direction: Direction) -> Result<Vec<f64>> {
    match direction {
        Direction::Diagonal => Ok(prior.shifted(k)),
        Direction::Dimension(d) => {
            if d >= prior.dim() {
                return Err(Error::Dimension {
                    expected: prior.dim(),
                    got: d,
                });
            }
            let mut z = prior.mean.clone();
            z[d] += k * prior.log_std[d].exp();
            Ok(z)
        }
    }
}

/// Encoder output at each sequence's first position (its leading `<bos>`).
pub fn bos_rows<T: Scalar>(g: &mut Graph<'_, T>, states: &SequenceStates) -> Var {
    let rows = (0..states.layout.sequences())
        .map(|i| states.layout.first_row(i))
        .collect();
    g.gather_rows(states.values, rows)
}

pub(crate) fn sum<T: Scalar>(g: &mut Graph<'_, T>, parts: &[Var]) -> Var {
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = g.add(acc, p);
    }
    acc
}

#[cfg(test)]
mod tests;
