use std::fmt::Write as _;
use std::path::Path;

use crate::io::{read_utf8, write_atomic};
use crate::tm::Orientation;

use super::DecodeError;

/// Feature order used by weight vectors and feature vectors. The last six
/// are present only when lexicalized reordering is enabled.
pub const FEATURE_NAMES: [&str; 14] = [
    "tm_p_t_given_s",
    "tm_p_s_given_t",
    "tm_lex_t_given_s",
    "tm_lex_s_given_t",
    "phrase_penalty",
    "word_penalty",
    "lm",
    "distortion",
    "lr_prev_mono",
    "lr_prev_swap",
    "lr_prev_disc",
    "lr_next_mono",
    "lr_next_swap",
    "lr_next_disc",
];

/// Number of features without lexicalized reordering.
pub const BASE_FEATURES: usize = 8;

/// Log-score used for any feature value a phrase does not provide.
pub const OOV_LOG_FLOOR: f64 = -10.0;

/// Positions in [`FEATURE_NAMES`].
pub mod index {
    pub const TM_P_T_GIVEN_S: usize = 0;
    pub const TM_P_S_GIVEN_T: usize = 1;
    pub const TM_LEX_T_GIVEN_S: usize = 2;
    pub const TM_LEX_S_GIVEN_T: usize = 3;
    pub const PHRASE_PENALTY: usize = 4;
    pub const WORD_PENALTY: usize = 5;
    pub const LM: usize = 6;
    pub const DISTORTION: usize = 7;
    pub const LR_PREV: usize = 8;
    pub const LR_NEXT: usize = 11;
}

/// Gap between consecutive source phrases; 0 for monotone continuation.
/// `prev_end` is `-1` before the first phrase.
pub fn distortion_cost(prev_end: isize, next_start: usize) -> usize {
    (next_start as isize - prev_end - 1).unsigned_abs()
}

/// Orientation of the phrase covering `next` with respect to the phrase
/// that precedes it in the output. `None` is the sentence start; the
/// sentence end is queried as the virtual span `(n, n)`.
pub fn decoding_orientation(prev: Option<(usize, usize)>, next: (usize, usize)) -> Orientation {
    match prev {
        None if next.0 == 0 => Orientation::Monotone,
        None => Orientation::Discontinuous,
        Some((p0, p1)) => {
            if next.0 == p1 + 1 {
                Orientation::Monotone
            } else if next.1 + 1 == p0 {
                Orientation::Swap
            } else {
                Orientation::Discontinuous
            }
        }
    }
}

pub(crate) fn log_or_floor(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        OOV_LOG_FLOOR
    }
}

/// The log-linear weight vector λ.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWeights {
    values: Vec<f64>,
}

impl FeatureWeights {
    /// Accepts 8 or 14 finite weights in [`FEATURE_NAMES`] order.
    pub fn new(values: Vec<f64>) -> Result<Self, DecodeError> {
        if values.len() != BASE_FEATURES && values.len() != FEATURE_NAMES.len() {
            return Err(DecodeError::WeightLength {
                expected: FEATURE_NAMES.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DecodeError::NonFiniteWeight(FEATURE_NAMES[i].to_owned()));
        }
        Ok(FeatureWeights { values })
    }

    /// Tuning start point: all ones except the word penalty.
    pub fn initial(use_lex_reordering: bool) -> Self {
        let n = if use_lex_reordering {
            FEATURE_NAMES.len()
        } else {
            BASE_FEATURES
        };
        let mut values = vec![1.0; n];
        values[index::WORD_PENALTY] = 0.0;
        FeatureWeights { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &'static [&'static str] {
        &FEATURE_NAMES[..self.values.len()]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub(crate) fn set(&mut self, i: usize, value: f64) {
        self.values[i] = value;
    }

    pub fn dot(&self, features: &[f64]) -> f64 {
        dot(&self.values, features)
    }

    /// `feature_name value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (n, v) in self.names().iter().zip(&self.values) {
            let _ = writeln!(out, "{n} {v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DecodeError> {
        let mut values: Vec<Option<f64>> = vec![None; FEATURE_NAMES.len()];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| DecodeError::Parse { line: i + 1, msg };
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `feature_name value`".into()));
            };
            let idx = FEATURE_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| err(format!("unknown feature {name:?}")))?;
            let v: f64 = value.parse().map_err(|_| err(format!("bad weight {value:?}")))?;
            if values[idx].replace(v).is_some() {
                return Err(err(format!("duplicate feature {name:?}")));
            }
        }
        let n = values.iter().filter(|v| v.is_some()).count();
        let complete = |k: usize| n == k && values[..k].iter().all(Option::is_some);
        if !complete(BASE_FEATURES) && !complete(FEATURE_NAMES.len()) {
            return Err(DecodeError::WeightLength {
                expected: FEATURE_NAMES.len(),
                found: n,
            });
        }
        FeatureWeights::new(values.into_iter().flatten().collect())
    }

    pub fn write(&self, path: &Path) -> Result<(), DecodeError> {
        write_atomic(path, &self.to_text()).map_err(|source| DecodeError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, DecodeError> {
        let text = read_utf8(path).map_err(|source| DecodeError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_text(&text)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
