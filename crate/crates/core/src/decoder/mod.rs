//! Log-linear phrase-based decoding: feature definitions, stack-based
//! beam search with hypothesis recombination, n-best extraction from the
//! search graph and a coordinate-ascent weight tuner.

mod features;
mod search;
mod tune;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::lm::NGramModel;
use crate::tm::{PhraseTable, ReorderingTable};

pub use features::{
    decoding_orientation, distortion_cost, FeatureWeights, BASE_FEATURES, FEATURE_NAMES,
    OOV_LOG_FLOOR,
};
pub use features::index as feature;
pub use search::{decode, nbest, write_nbest, AppliedPhrase, Hypothesis, NBestList};
pub use tune::{optimize_on_pool, tune_weights, PoolEntry, RoundTrace, TuneResult, TuningPool};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("weight vector has {found} entries, the active feature set needs {expected}")]
    WeightLength { expected: usize, found: usize },
    #[error("non-finite weight for feature {0}")]
    NonFiniteWeight(String),
    #[error("beam size must be at least 1")]
    ZeroBeam,
    #[error("tuning needs a non-empty development set with one reference per sentence")]
    EmptyDev,
    #[error("weights line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub beam_size: usize,
    /// Maximum jump between consecutive phrases; `None` is unlimited.
    pub distortion_limit: Option<usize>,
    pub nbest_size: usize,
    pub use_lex_reordering: bool,
    /// Translation options kept per source span.
    pub max_options: usize,
    /// Upper bound on search-graph paths visited while extracting n-best
    /// lists.
    pub max_nbest_pops: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam_size: 100,
            distortion_limit: Some(6),
            nbest_size: 20,
            use_lex_reordering: true,
            max_options: 20,
            max_nbest_pops: 100_000,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_size == 0 {
            return Err(DecodeError::ZeroBeam);
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        if self.use_lex_reordering {
            FEATURE_NAMES.len()
        } else {
            BASE_FEATURES
        }
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "beam_size = {}\ndistortion_limit = {}\nnbest_size = {}\nuse_lex_reordering = {}\nmax_options = {}\nmax_nbest_pops = {}\n",
            self.beam_size,
            DistortionLimit(self.distortion_limit),
            self.nbest_size,
            self.use_lex_reordering,
            self.max_options,
            self.max_nbest_pops
        )
    }

    pub fn from_text(text: &str) -> Result<Self, DecodeError> {
        let mut cfg = DecoderConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| DecodeError::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |_| err(format!("bad value for {k}"));
            match k {
                "beam_size" => cfg.beam_size = v.parse().map_err(bad)?,
                "distortion_limit" => {
                    cfg.distortion_limit = v.parse::<DistortionLimit>().map_err(|_| err(format!("bad value for {k}")))?.0
                }
                "nbest_size" => cfg.nbest_size = v.parse().map_err(bad)?,
                "use_lex_reordering" => {
                    cfg.use_lex_reordering = v.parse().map_err(|_| err(format!("bad value for {k}")))?
                }
                "max_options" => cfg.max_options = v.parse().map_err(bad)?,
                "max_nbest_pops" => cfg.max_nbest_pops = v.parse().map_err(bad)?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Distortion limit as written in configuration files: a count or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistortionLimit(pub Option<usize>);

impl fmt::Display for DistortionLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("none"),
        }
    }
}

impl FromStr for DistortionLimit {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("unlimited") {
            Ok(DistortionLimit(None))
        } else {
            s.parse().map(|n| DistortionLimit(Some(n)))
        }
    }
}

/// Everything the decoder reads besides the source sentence.
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub table: &'a PhraseTable,
    pub reordering: Option<&'a ReorderingTable>,
    pub lm: &'a NGramModel,
}
