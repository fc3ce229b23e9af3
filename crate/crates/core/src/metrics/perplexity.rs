use crate::error::{Error, Result};

/// `exp` of the mean token negative log-likelihood pooled over every
/// `(example, reference, token)`; input is `[example][reference][token]`.
pub fn perplexity(nlls: &[Vec<Vec<f64>>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for example in nlls {
        for reference in example {
            total += reference.iter().sum::<f64>();
            count += reference.len();
        }
    }
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok((total / count as f64).exp())
}
