//! Corpus ingestion: tokenization, length/ratio filtering and dev/test
//! selection over line-aligned multilingual corpora.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::io::write_atomic;
use crate::lm::NGramModel;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid UTF-8{} at byte offset {offset}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Decode { line: Option<usize>, offset: usize },
    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("row {row} has {found} sentences, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("language {lang:?} has {found} lines, expected {expected}")]
    RaggedColumn {
        lang: String,
        found: usize,
        expected: usize,
    },
    #[error("dev/test selection needs {requested} rows but only {available} candidate rows occur exactly once")]
    Selection { available: usize, requested: usize },
    #[error("unknown tokenizer profile {0:?} (expected lowercase, plain or pretokenized)")]
    UnknownProfile(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A tokenized sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(CorpusError::InvalidToken(bad.clone()));
        }
        Ok(Sentence(tokens))
    }

    /// Splits on whitespace; this can never produce an invalid token.
    pub fn parse(line: &str) -> Self {
        Sentence(line.split_whitespace().map(str::to_owned).collect())
    }

    pub fn empty() -> Self {
        Sentence(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl From<&str> for Sentence {
    fn from(s: &str) -> Self {
        Sentence::parse(s)
    }
}

/// Tokenizer profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Split punctuation and lowercase.
    Lowercase,
    /// Split punctuation, keep case.
    Plain,
    /// Whitespace splitting only, for externally segmented input.
    Pretokenized,
}

impl FromStr for Profile {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lowercase" => Ok(Profile::Lowercase),
            "plain" => Ok(Profile::Plain),
            "pretokenized" => Ok(Profile::Pretokenized),
            other => Err(CorpusError::UnknownProfile(other.to_owned())),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Lowercase => "lowercase",
            Profile::Plain => "plain",
            Profile::Pretokenized => "pretokenized",
        })
    }
}

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32,
        0x0300..=0x036F | 0x0483..=0x0489 | 0x0591..=0x05BD | 0x0610..=0x061A
        | 0x064B..=0x065F | 0x0670 | 0x06D6..=0x06DC | 0x06DF..=0x06E4
        | 0x0900..=0x0903 | 0x093A..=0x094F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF
        | 0x200C..=0x200D | 0x20D0..=0x20FF | 0xFE00..=0xFE0F | 0xFE20..=0xFE2F)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || is_combining_mark(c)
}

/// Tokenizes one line of raw bytes.
pub fn tokenize(raw_line: &[u8], profile: Profile) -> Result<Sentence, CorpusError> {
    let text = std::str::from_utf8(raw_line).map_err(|e| CorpusError::Decode {
        line: None,
        offset: e.valid_up_to(),
    })?;
    Ok(tokenize_str(text, profile))
}

/// Tokenizes already-decoded text. Every non-word character outside
/// whitespace becomes a token of its own.
pub fn tokenize_str(text: &str, profile: Profile) -> Sentence {
    if profile == Profile::Pretokenized {
        return Sentence::parse(text);
    }
    let lowered;
    let text = if profile == Profile::Lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_word_char(c) {
                word.push(c);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    Sentence(tokens)
}

/// Line-aligned sentences in several languages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    languages: Vec<String>,
    rows: Vec<Vec<Sentence>>,
}

impl ParallelCorpus {
    pub fn new(languages: Vec<String>, rows: Vec<Vec<Sentence>>) -> Result<Self, CorpusError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != languages.len() {
                return Err(CorpusError::RaggedRow {
                    row: i,
                    found: row.len(),
                    expected: languages.len(),
                });
            }
        }
        Ok(ParallelCorpus { languages, rows })
    }

    pub fn from_columns(
        languages: Vec<String>,
        columns: Vec<Vec<Sentence>>,
    ) -> Result<Self, CorpusError> {
        assert_eq!(languages.len(), columns.len(), "one column per language");
        let n = columns.first().map_or(0, Vec::len);
        for (lang, col) in languages.iter().zip(&columns) {
            if col.len() != n {
                return Err(CorpusError::RaggedColumn {
                    lang: lang.clone(),
                    found: col.len(),
                    expected: n,
                });
            }
        }
        let mut iters: Vec<_> = columns.into_iter().map(Vec::into_iter).collect();
        let rows = (0..n)
            .map(|_| iters.iter_mut().map(|it| it.next().unwrap()).collect())
            .collect();
        Ok(ParallelCorpus { languages, rows })
    }

    /// Convenience constructor for a two-language corpus.
    pub fn bitext(
        src_lang: &str,
        tgt_lang: &str,
        pairs: impl IntoIterator<Item = (Sentence, Sentence)>,
    ) -> Self {
        ParallelCorpus {
            languages: vec![src_lang.to_owned(), tgt_lang.to_owned()],
            rows: pairs.into_iter().map(|(s, t)| vec![s, t]).collect(),
        }
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn rows(&self) -> &[Vec<Sentence>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lang_index(&self, lang: &str) -> Result<usize, CorpusError> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .ok_or_else(|| CorpusError::UnknownLanguage(lang.to_owned()))
    }

    pub fn column(&self, lang: &str) -> Result<Vec<Sentence>, CorpusError> {
        let i = self.lang_index(lang)?;
        Ok(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    /// Keeps only the given languages, in the given order.
    pub fn project(&self, langs: &[&str]) -> Result<ParallelCorpus, CorpusError> {
        let idx: Vec<usize> = langs
            .iter()
            .map(|l| self.lang_index(l))
            .collect::<Result<_, _>>()?;
        Ok(ParallelCorpus {
            languages: langs.iter().map(|l| (*l).to_owned()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        })
    }

    /// Source/target pairs of a two-language projection.
    pub fn pairs(&self, src: &str, tgt: &str) -> Result<Vec<(Sentence, Sentence)>, CorpusError> {
        let s = self.lang_index(src)?;
        let t = self.lang_index(tgt)?;
        Ok(self
            .rows
            .iter()
            .map(|r| (r[s].clone(), r[t].clone()))
            .collect())
    }

    pub fn select_rows(&self, indices: &[usize]) -> ParallelCorpus {
        ParallelCorpus {
            languages: self.languages.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn relabel(&mut self, from: &str, to: &str) -> Result<(), CorpusError> {
        let i = self.lang_index(from)?;
        self.languages[i] = to.to_owned();
        Ok(())
    }
}

/// Path of the file holding `lang` for a corpus stored under `prefix`.
pub fn language_path(prefix: &Path, lang: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(lang);
    PathBuf::from(s)
}

/// Reads `prefix.<lang>` for every language and tokenizes each line.
pub fn read_corpus(
    prefix: &Path,
    languages: &[String],
    profile: Profile,
) -> Result<ParallelCorpus, CorpusError> {
    let mut columns = Vec::with_capacity(languages.len());
    for lang in languages {
        let path = language_path(prefix, lang);
        columns.push(read_sentences(&path, profile)?);
    }
    ParallelCorpus::from_columns(languages.to_vec(), columns)
}

/// Reads one sentence per line.
pub fn read_sentences(path: &Path, profile: Profile) -> Result<Vec<Sentence>, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (n, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let is_trailing = offset + line.len() == bytes.len() && line.is_empty();
        if is_trailing {
            break;
        }
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        match tokenize(line, profile) {
            Ok(s) => out.push(s),
            Err(CorpusError::Decode { offset: o, .. }) => {
                return Err(CorpusError::Decode {
                    line: Some(n + 1),
                    offset: offset + o,
                })
            }
            Err(e) => return Err(e),
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let mut text = String::new();
    for s in sentences {
        text.push_str(&s.to_string());
        text.push('\n');
    }
    write_atomic(path, &text).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_corpus(prefix: &Path, corpus: &ParallelCorpus) -> Result<(), CorpusError> {
    for lang in corpus.languages() {
        write_sentences(&language_path(prefix, lang), &corpus.column(lang)?)?;
    }
    Ok(())
}

/// Removes rows with an over-long side or an excessive length ratio
/// between the pivot language and any other language. Removal is
/// row-wide.
pub fn filter_corpus(
    corpus: &ParallelCorpus,
    max_len: usize,
    max_ratio: f64,
    pivot_lang: &str,
) -> Result<ParallelCorpus, CorpusError> {
    let pivot = corpus.lang_index(pivot_lang)?;
    let keep: Vec<bool> = corpus
        .rows
        .par_iter()
        .map(|row| row_passes(row, pivot, max_len, max_ratio))
        .collect();
    let rows = corpus
        .rows
        .iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then(|| r.clone()))
        .collect();
    Ok(ParallelCorpus {
        languages: corpus.languages.clone(),
        rows,
    })
}

fn row_passes(row: &[Sentence], pivot: usize, max_len: usize, max_ratio: f64) -> bool {
    if row.iter().any(|s| s.is_empty() || s.len() > max_len) {
        return false;
    }
    let p = row[pivot].len() as f64;
    row.iter().enumerate().all(|(i, s)| {
        if i == pivot {
            return true;
        }
        let n = s.len() as f64;
        n / p <= max_ratio && p / n <= max_ratio
    })
}

/// Result of dev/test selection. The row index vectors refer to the
/// corpus passed to [`select_dev_test`].
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    pub dev_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Per-row selection statistics for the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub row: usize,
    pub perplexity: f64,
    pub oov_ratio: f64,
}

/// Rows whose sentence occurs exactly once in every language column.
pub fn unique_rows(corpus: &ParallelCorpus) -> Vec<usize> {
    let mut counts: Vec<HashMap<&Sentence, usize>> =
        vec![HashMap::new(); corpus.languages.len()];
    for row in &corpus.rows {
        for (c, s) in counts.iter_mut().zip(row) {
            *c.entry(s).or_default() += 1;
        }
    }
    (0..corpus.len())
        .filter(|&i| {
            let row = &corpus.rows[i];
            row.iter().all(|s| !s.is_empty())
                && row.iter().zip(&counts).all(|(s, c)| c[s] == 1)
        })
        .collect()
}

/// Picks dev and test rows among sentences unique in all languages:
/// the `pool_factor * (dev_size + test_size)` rows with the highest
/// perplexity under `lm`, re-ranked by ascending OOV ratio.
pub fn select_dev_test(
    corpus: &ParallelCorpus,
    lm: &NGramModel,
    select_lang: &str,
    dev_size: usize,
    test_size: usize,
    pool_factor: usize,
) -> Result<CorpusSplit, CorpusError> {
    let lang = corpus.lang_index(select_lang)?;
    let candidates = unique_rows(corpus);
    let requested = dev_size + test_size;
    if requested > candidates.len() || (requested > 0 && candidates.is_empty()) {
        return Err(CorpusError::Selection {
            available: candidates.len(),
            requested,
        });
    }
    let mut scored: Vec<CandidateScore> = candidates
        .par_iter()
        .map(|&row| {
            let s = &corpus.rows[row][lang];
            let oov = s.tokens().iter().filter(|t| !lm.contains(t)).count();
            CandidateScore {
                row,
                perplexity: lm.perplexity(std::slice::from_ref(s)),
                oov_ratio: oov as f64 / s.len() as f64,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.perplexity
            .total_cmp(&a.perplexity)
            .then(a.row.cmp(&b.row))
    });
    let pool_len = (pool_factor.max(1) * requested).min(scored.len());
    let mut pool = scored[..pool_len].to_vec();
    pool.sort_by(|a, b| {
        a.oov_ratio
            .total_cmp(&b.oov_ratio)
            .then(b.perplexity.total_cmp(&a.perplexity))
            .then(a.row.cmp(&b.row))
    });
    let dev_rows: Vec<usize> = pool[..dev_size].iter().map(|c| c.row).collect();
    let test_rows: Vec<usize> = pool[dev_size..requested].iter().map(|c| c.row).collect();
    let mut held_out = vec![false; corpus.len()];
    for &r in dev_rows.iter().chain(&test_rows) {
        held_out[r] = true;
    }
    let train_rows: Vec<usize> = (0..corpus.len()).filter(|&i| !held_out[i]).collect();
    Ok(CorpusSplit {
        train: corpus.select_rows(&train_rows),
        dev: corpus.select_rows(&dev_rows),
        test: corpus.select_rows(&test_rows),
        dev_rows,
        test_rows,
    })
}
