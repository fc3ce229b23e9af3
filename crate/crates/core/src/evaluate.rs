//! Per-checkpoint metrics and the multi-seed report.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concvae::LatentSource;
use crate::corpus::{sequential_batches, EncodedExample};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_seeds, bleu, perplexity, wilcoxon_signed_rank, Smoothing, Summary, Wilcoxon};
use crate::model::{Model, ModelKind};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub max_len: usize,
    pub smoothing: Smoothing,
    pub latent_source: LatentSource,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_len: 25,
            smoothing: Smoothing::None,
            latent_source: LatentSource::PriorMean,
        }
    }
}

/// Metrics of one checkpoint on one example set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    /// Percent of correct labels.
    pub accuracy: Option<f64>,
    pub perplexity: Option<f64>,
    pub bleu: Option<f64>,
    /// 1 or 0 per example.
    pub per_example_correct: Option<Vec<f64>>,
    /// Mean token NLL per example over its references.
    pub per_example_nll: Option<Vec<f64>>,
    pub generations: Option<Vec<Vec<u32>>>,
}

impl ModelEval {
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (k, v) in [("accuracy", self.accuracy), ("perplexity", self.perplexity), ("bleu", self.bleu)] {
            if let Some(v) = v {
                m.insert(k.to_owned(), v);
            }
        }
        m
    }
}

/// Strips `<bos>`/`<eos>` from an encoded reference.
fn body(ids: &[u32]) -> &[u32] {
    &ids[1..ids.len() - 1]
}

pub fn evaluate<T: Scalar>(model: &Model<T>, examples: &[EncodedExample], opts: &EvalOptions) -> Result<ModelEval> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let kind = model.kind();
    let predictions = examples
        .par_iter()
        .map(|ex| model.predict_example(ex, opts.max_len))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ModelEval::default();
    if kind.classifies() {
        let correct: Vec<f64> = predictions
            .iter()
            .zip(examples)
            .map(|(p, ex)| f64::from(u8::from(p.label == Some(ex.label))))
            .collect();
        out.accuracy = Some(100.0 * correct.iter().sum::<f64>() / correct.len() as f64);
        out.per_example_correct = Some(correct);
    }
    if kind.generates() {
        let mut nlls = Vec::with_capacity(examples.len());
        for batch in sequential_batches(examples, opts.batch_size) {
            nlls.extend(model.token_nlls(&batch, opts.latent_source)?.expect("generator"));
        }
        out.perplexity = Some(perplexity(&nlls)?);
        out.per_example_nll = Some(
            nlls.iter()
                .map(|refs| {
                    let (s, n) = refs
                        .iter()
                        .fold((0.0, 0usize), |(s, n), r| (s + r.iter().sum::<f64>(), n + r.len()));
                    s / n.max(1) as f64
                })
                .collect(),
        );
        let gens: Vec<Vec<u32>> = predictions
            .into_iter()
            .map(|p| p.explanation.expect("generator"))
            .collect();
        let refs: Vec<Vec<Vec<u32>>> = examples
            .iter()
            .map(|ex| ex.explanations.iter().map(|e| body(e).to_vec()).collect())
            .collect();
        out.bleu = Some(bleu(&gens, &refs, opts.smoothing)?);
        out.generations = Some(gens);
    }
    Ok(out)
}

/// One evaluated checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub kind: ModelKind,
    pub seed: u64,
    pub checkpoint: String,
    pub eval: ModelEval,
    pub correct_at_100: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub checkpoint: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub kind: ModelKind,
    pub per_seed: Vec<SeedMetrics>,
    pub summary: BTreeMap<String, Summary>,
    /// Metrics the family cannot produce.
    pub not_applicable: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub a: ModelKind,
    pub b: ModelKind,
    /// Paired per-example quantity compared.
    pub statistic: String,
    pub test: Option<Wilcoxon>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub bleu_smoothing: Smoothing,
    pub std: String,
    pub perplexity: String,
    pub latent_source: LatentSource,
    pub config_hash: Option<String>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub families: Vec<FamilyReport>,
    pub significance: Vec<Significance>,
    pub metadata: ReportMetadata,
}

const METRICS: [&str; 4] = ["accuracy", "perplexity", "bleu", "correct_at_100"];

fn mean_per_example(runs: &[&RunResult], pick: impl Fn(&ModelEval) -> Option<&Vec<f64>>) -> Option<Vec<f64>> {
    let vecs: Vec<&Vec<f64>> = runs.iter().map(|r| pick(&r.eval)).collect::<Option<_>>()?;
    let n = vecs.first()?.len();
    Some(
        (0..n)
            .map(|i| vecs.iter().map(|v| v[i]).sum::<f64>() / vecs.len() as f64)
            .collect(),
    )
}

/// Groups runs by model kind, summarises each metric over seeds and compares
/// every pair of kinds with a signed-rank test on per-example scores averaged
/// over seeds.
pub fn build_report(runs: &[RunResult], opts: &EvalOptions, config_hash: Option<String>) -> EvalReport {
    let mut by_kind: BTreeMap<ModelKind, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        by_kind.entry(r.kind).or_default().push(r);
    }
    let families: Vec<FamilyReport> = by_kind
        .iter()
        .map(|(&kind, rs)| {
            let per_seed: Vec<SeedMetrics> = rs
                .iter()
                .map(|r| {
                    let mut metrics = r.eval.metrics();
                    if let Some(c) = r.correct_at_100 {
                        metrics.insert("correct_at_100".into(), c);
                    }
                    SeedMetrics {
                        seed: r.seed,
                        checkpoint: r.checkpoint.clone(),
                        metrics,
                    }
                })
                .collect();
            let pairs: Vec<(u64, BTreeMap<String, f64>)> =
                per_seed.iter().map(|s| (s.seed, s.metrics.clone())).collect();
            let summary = aggregate_seeds(&pairs);
            let not_applicable = METRICS
                .iter()
                .filter(|m| !summary.contains_key(**m))
                .map(|m| m.to_string())
                .collect();
            FamilyReport {
                kind,
                per_seed,
                summary,
                not_applicable,
            }
        })
        .collect();

    let kinds: Vec<ModelKind> = by_kind.keys().copied().collect();
    let mut significance = Vec::new();
    for (i, &a) in kinds.iter().enumerate() {
        for &b in &kinds[i + 1..] {
            let (ra, rb) = (&by_kind[&a], &by_kind[&b]);
            let (statistic, xa, xb) = if a.classifies() && b.classifies() {
                (
                    "label correctness",
                    mean_per_example(ra, |e| e.per_example_correct.as_ref()),
                    mean_per_example(rb, |e| e.per_example_correct.as_ref()),
                )
            } else if a.generates() && b.generates() {
                (
                    "reference token nll",
                    mean_per_example(ra, |e| e.per_example_nll.as_ref()),
                    mean_per_example(rb, |e| e.per_example_nll.as_ref()),
                )
            } else {
                continue;
            };
            let (test, note) = match (xa, xb) {
                (Some(xa), Some(xb)) => match wilcoxon_signed_rank(&xa, &xb) {
                    Ok(w) => (Some(w), None),
                    Err(e) => (None, Some(e.to_string())),
                },
                _ => (None, Some("per-example scores unavailable".into())),
            };
            significance.push(Significance {
                a,
                b,
                statistic: statistic.into(),
                test,
                note,
            });
        }
    }
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    EvalReport {
        families,
        significance,
        metadata: ReportMetadata {
            bleu_smoothing: opts.smoothing,
            std: "sample (n-1)".into(),
            perplexity: "exp of token-pooled mean nll over examples and references".into(),
            latent_source: opts.latent_source,
            config_hash,
            seeds,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::testutil::{random_examples, tiny_config};

    #[test]
    fn capability_gating() {
        let ex = random_examples(5, 3, 30, 1);
        let opts = EvalOptions::default();
        let c = Model::<f32>::new(Architecture::new(ModelKind::Mixture, tiny_config(30)), 1).unwrap();
        let e = evaluate(&c, &ex, &opts).unwrap();
        assert!(e.accuracy.is_some() && e.perplexity.is_none() && e.bleu.is_none());
        let g = Model::<f32>::new(Architecture::new(ModelKind::InteractionM2, tiny_config(30)), 1).unwrap();
        let e = evaluate(&g, &ex, &opts).unwrap();
        assert!(e.accuracy.is_some() && e.perplexity.unwrap() > 1.0 && e.bleu.is_some());
        assert_eq!(e.per_example_nll.as_ref().unwrap().len(), 5);
    }

    fn run(kind: ModelKind, seed: u64, acc: f64, correct: Vec<f64>) -> RunResult {
        RunResult {
            kind,
            seed,
            checkpoint: format!("{kind}-{seed}"),
            eval: ModelEval {
                accuracy: Some(acc),
                per_example_correct: Some(correct),
                ..Default::default()
            },
            correct_at_100: None,
        }
    }

    #[test]
    fn report_summaries_and_tests() {
        let good = vec![1.0; 8];
        let bad = vec![0.0; 8];
        let runs = vec![
            run(ModelKind::Mixture, 1000, 78.0, good.clone()),
            run(ModelKind::Mixture, 2000, 79.0, good.clone()),
            run(ModelKind::Mixture, 3000, 80.0, good),
            run(ModelKind::Agnostic, 1000, 60.0, bad),
        ];
        let r = build_report(&runs, &EvalOptions::default(), None);
        let mix = r.families.iter().find(|f| f.kind == ModelKind::Mixture).unwrap();
        assert_eq!(mix.summary["accuracy"].rendered, "79.00 (1.00)");
        assert!(mix.not_applicable.contains(&"bleu".to_string()));
        assert_eq!(r.significance.len(), 1);
        let w = r.significance[0].test.as_ref().unwrap();
        assert!((w.p_value - 2.0 / 256.0).abs() < 1e-12);
        assert_eq!(r.metadata.seeds, vec![1000, 2000, 3000]);
    }
}
