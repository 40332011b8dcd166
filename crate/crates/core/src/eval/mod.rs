//! Evaluation: BLEU, minimum-Bayes-risk combination, paired bootstrap
//! significance and the RQuantity reordering measure.

mod bleu;
mod bootstrap;
mod mbr;
mod rquantity;

use thiserror::Error;

pub use bleu::{bleu_corpus, bleu_sentence, BleuReport, BleuStats, MAX_ORDER};
pub use bootstrap::{bootstrap_significance, SignificanceVerdict, Winner};
pub use mbr::{mbr_combine, mbr_select, MIN_MBR_CANDIDATES};
pub use rquantity::{rquantity, rquantity_sentence, ReorderingSet, RQuantityReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {left} vs {right} sentences")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("nothing to evaluate")]
    Empty,
    #[error("sentence {index}: MBR needs at least 3 hypotheses per sentence, got {found}")]
    TooFewCandidates { index: usize, found: usize },
    #[error("sentence {index}: posterior weights must be non-negative, one per candidate")]
    BadPosterior { index: usize },
    #[error("bootstrap needs at least one sample")]
    NoSamples,
    #[error("confidence level must lie in (0, 1], got {0}")]
    BadLevel(f64),
    #[error("sentence {index}: alignment is {found:?}, sentence pair is {expected:?}")]
    AlignmentShape {
        index: usize,
        found: (usize, usize),
        expected: (usize, usize),
    },
}

pub(crate) fn check_lengths(what: &'static str, left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::LengthMismatch { what, left, right });
    }
    Ok(())
}
