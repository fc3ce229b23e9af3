//! Perplexity, BLEU, Correct@k, seed aggregation and the signed-rank test.

mod aggregate;
mod bleu;
mod correct;
mod perplexity;
mod wilcoxon;

pub use aggregate::{aggregate_seeds, Summary};
pub use bleu::{bleu, Smoothing};
pub use correct::{correct_at_k, load_annotations, Annotation};
pub use perplexity::perplexity;
pub use wilcoxon::{mid_ranks, wilcoxon_signed_rank, Wilcoxon, WilcoxonMethod, EXACT_LIMIT};
