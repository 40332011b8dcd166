//! Translation model: consistent phrase extraction, relative-frequency
//! phrase tables with lexical weights, and the lexicalized reordering
//! model.

mod extract;
mod reordering;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use extract::{extract_phrases, PhrasePair};
pub use reordering::{
    estimate_lex_reordering, next_orientation, prev_orientation, LexReorderingEntry, Orientation,
    ReorderingTable, REORDERING_SMOOTHING,
};
pub use table::{build_phrase_table, lexical_weight, Phrase, PhraseTable, PhraseTableEntry, LEXICAL_FLOOR};

/// Phrase length limit used when none is configured.
pub const DEFAULT_MAX_PHRASE_LEN: usize = 10;

#[derive(Debug, Error)]
pub enum TmError {
    #[error("alignment is {0}x{1} but the sentence pair is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("{0} sentence pairs but {1} alignments")]
    CountMismatch(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
