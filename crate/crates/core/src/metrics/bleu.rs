use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Any zero precision makes the score 0.
    #[default]
    None,
    /// Add one to numerator and denominator for n ≥ 2.
    AddOne,
}

fn ngrams<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU-4 on a 0–100 scale with multi-reference clipping and a brevity
/// penalty against the closest reference length (shorter wins ties).
pub fn bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<Vec<T>>], smoothing: Smoothing) -> Result<f64> {
    const N: usize = 4;
    if hypotheses.len() != references.len() {
        return Err(Error::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    let mut matched = [0usize; N];
    let mut total = [0usize; N];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (hyp, refs) in hypotheses.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::Config("example without references".into()));
        }
        hyp_len += hyp.len();
        ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .expect("non-empty");
        for n in 1..=N {
            let h = ngrams(hyp, n);
            let mut max_ref: HashMap<&[T], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in &h {
                matched[n - 1] += (*c).min(max_ref.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_p = 0.0;
    for n in 0..N {
        let (m, t) = match smoothing {
            Smoothing::AddOne if n > 0 => (matched[n] + 1, total[n] + 1),
            _ => (matched[n], total[n]),
        };
        if m == 0 {
            return Ok(0.0);
        }
        log_p += (m as f64 / t as f64).ln() / N as f64;
    }
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * log_p.exp())
}
