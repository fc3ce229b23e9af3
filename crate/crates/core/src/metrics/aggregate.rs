use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Mean and sample (n − 1) standard deviation of one metric across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub rendered: String,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n > 0, "summary of no values");
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        let rendered = match std {
            Some(s) => format!("{mean:.2} ({s:.2})"),
            None => format!("{mean:.2}"),
        };
        Self { n, mean, std, rendered }
    }
}

/// Per-metric summaries over `(seed, metrics)` runs; a metric absent from some
/// runs is summarised over the runs that have it.
pub fn aggregate_seeds(runs: &[(u64, BTreeMap<String, f64>)]) -> BTreeMap<String, Summary> {
    let mut by_metric: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for (seed, metrics) in runs {
        for (k, v) in metrics {
            by_metric.entry(k.clone()).or_default().push((*seed, *v));
        }
    }
    by_metric
        .into_iter()
        .map(|(k, mut vs)| {
            vs.sort_by_key(|(s, _)| *s);
            let values: Vec<f64> = vs.into_iter().map(|(_, v)| v).collect();
            (k, Summary::of(&values))
        })
        .collect()
}
