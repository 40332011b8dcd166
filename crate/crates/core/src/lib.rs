//! A small phrase-based statistical machine translation toolkit.
//!
//! The crate covers the whole pipeline needed to compare direct translation
//! against pivot-language strategies: corpus preparation, IBM Model 1 word
//! alignment with grow-diag-final-and symmetrization, phrase and lexicalized
//! reordering tables, a Kneser-Ney language model, a log-linear stack
//! decoder with a coordinate-ascent tuner, cascade / pseudo-corpus /
//! triangulation pivoting, and evaluation (BLEU, MBR combination, paired
//! bootstrap, RQuantity).

pub mod align;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod lm;
pub mod pipeline;
pub mod pivot;
pub mod synth;
pub mod tm;

pub use corpus::{ParallelCorpus, Sentence};
pub use error::{Error, Result};
