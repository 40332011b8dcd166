//! Word alignment: IBM Model 1 trained with EM, directional Viterbi links
//! and grow-diag-final-and symmetrization.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::Sentence;
use crate::io::{read_utf8, write_atomic};

/// Token standing for the virtual empty word on the conditioning side.
pub const NULL_TOKEN: &str = "<NULL>";

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("cannot train alignment on an empty bitext")]
    EmptyBitext,
    #[error("sentence pair {0} has an empty side")]
    EmptySentence(usize),
    #[error("alignment needs at least one EM iteration")]
    NoIterations,
    #[error("alignment dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("link {0}-{1} is outside a {2}x{3} sentence pair")]
    OutOfBounds(usize, usize, usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Lexical translation table `w(s | t)`: the probability that target word
/// `t` (or the empty word) generates source word `s`. Rows are normalized
/// per conditioning target token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    prob: HashMap<String, HashMap<String, f64>>,
}

impl Lexicon {
    /// `w(source | target)`; `target = None` means the empty word.
    pub fn prob(&self, source: &str, target: Option<&str>) -> Option<f64> {
        self.prob
            .get(target.unwrap_or(NULL_TOKEN))
            .and_then(|row| row.get(source))
            .copied()
    }

    pub fn insert(&mut self, source: &str, target: Option<&str>, p: f64) {
        self.prob
            .entry(target.unwrap_or(NULL_TOKEN).to_owned())
            .or_default()
            .insert(source.to_owned(), p);
    }

    /// Sum of each conditional row, keyed by conditioning token.
    pub fn row_sums(&self) -> HashMap<&str, f64> {
        self.prob
            .iter()
            .map(|(t, row)| (t.as_str(), row.values().sum()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.prob.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Text lines `source target prob`, sorted.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&str, &str, f64)> = self
            .prob
            .iter()
            .flat_map(|(t, row)| row.iter().map(move |(s, p)| (s.as_str(), t.as_str(), *p)))
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out = String::new();
        for (s, t, p) in rows {
            let _ = writeln!(out, "{s} {t} {p}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, AlignError> {
        let mut lex = Lexicon::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |msg: &str| AlignError::Parse {
                line: i + 1,
                msg: msg.to_owned(),
            };
            if f.len() != 3 {
                return Err(parse_err("expected `src tgt prob`"));
            }
            let p: f64 = f[2].parse().map_err(|_| parse_err("bad probability"))?;
            lex.prob
                .entry(f[1].to_owned())
                .or_default()
                .insert(f[0].to_owned(), p);
        }
        Ok(lex)
    }

    pub fn write(&self, path: &Path) -> Result<(), AlignError> {
        write_atomic(path, &self.to_text()).map_err(|source| AlignError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, AlignError> {
        let text = read_utf8(path).map_err(|source| AlignError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_text(&text)
    }
}

/// Outcome of EM training.
#[derive(Debug, Clone)]
pub struct TrainedLexicon {
    pub lexicon: Lexicon,
    /// Corpus log-likelihood (natural log) under the parameters each
    /// iteration started from.
    pub log_likelihood: Vec<f64>,
}

/// Trains IBM Model 1 `w(s | t)` over `(source, target)` pairs, starting
/// from a uniform table. The empty word is prepended to every target.
pub fn train_ibm1(
    bitext: &[(Sentence, Sentence)],
    iterations: usize,
) -> Result<TrainedLexicon, AlignError> {
    if bitext.is_empty() {
        return Err(AlignError::EmptyBitext);
    }
    if iterations == 0 {
        return Err(AlignError::NoIterations);
    }
    if let Some(i) = bitext.iter().position(|(s, t)| s.is_empty() || t.is_empty()) {
        return Err(AlignError::EmptySentence(i));
    }

    let mut src_ids: HashMap<&str, usize> = HashMap::new();
    let mut tgt_ids: HashMap<&str, usize> = HashMap::new();
    let mut src_vocab: Vec<&str> = Vec::new();
    let mut tgt_vocab: Vec<&str> = vec![NULL_TOKEN];
    tgt_ids.insert(NULL_TOKEN, 0);
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = bitext
        .iter()
        .map(|(s, t)| {
            let s = s
                .tokens()
                .iter()
                .map(|w| {
                    *src_ids.entry(w.as_str()).or_insert_with(|| {
                        src_vocab.push(w.as_str());
                        src_vocab.len() - 1
                    })
                })
                .collect();
            let mut tv = vec![0];
            tv.extend(t.tokens().iter().map(|w| {
                *tgt_ids.entry(w.as_str()).or_insert_with(|| {
                    tgt_vocab.push(w.as_str());
                    tgt_vocab.len() - 1
                })
            }));
            (s, tv)
        })
        .collect();

    // Only co-occurring (source, target) cells can ever get mass.
    let uniform = 1.0 / src_vocab.len() as f64;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    for (s, t) in &pairs {
        for &si in s {
            for &tj in t {
                table.insert((si, tj), uniform);
            }
        }
    }

    let mut log_likelihood = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut counts: HashMap<(usize, usize), f64> = HashMap::with_capacity(table.len());
        let mut totals = vec![0.0; tgt_vocab.len()];
        let mut ll = 0.0;
        for (s, t) in &pairs {
            for &si in s {
                let z: f64 = t.iter().map(|&tj| table[&(si, tj)]).sum();
                ll += (z / t.len() as f64).ln();
                for &tj in t {
                    let post = table[&(si, tj)] / z;
                    *counts.entry((si, tj)).or_default() += post;
                    totals[tj] += post;
                }
            }
        }
        log_likelihood.push(ll);
        for (k, v) in table.iter_mut() {
            *v = counts[k] / totals[k.1];
        }
    }

    let mut lexicon = Lexicon::default();
    for (&(si, tj), &p) in &table {
        lexicon
            .prob
            .entry(tgt_vocab[tj].to_owned())
            .or_default()
            .insert(src_vocab[si].to_owned(), p);
    }
    Ok(TrainedLexicon {
        lexicon,
        log_likelihood,
    })
}

/// Word links of one sentence pair, 0-based `(source, target)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlignmentMatrix {
    src_len: usize,
    tgt_len: usize,
    links: BTreeSet<(usize, usize)>,
}

impl AlignmentMatrix {
    pub fn new(
        src_len: usize,
        tgt_len: usize,
        links: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, AlignError> {
        let links: BTreeSet<_> = links.into_iter().collect();
        if let Some(&(i, j)) = links.iter().find(|&&(i, j)| i >= src_len || j >= tgt_len) {
            return Err(AlignError::OutOfBounds(i, j, src_len, tgt_len));
        }
        Ok(AlignmentMatrix {
            src_len,
            tgt_len,
            links,
        })
    }

    pub fn empty(src_len: usize, tgt_len: usize) -> Self {
        AlignmentMatrix {
            src_len,
            tgt_len,
            links: BTreeSet::new(),
        }
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn tgt_len(&self) -> usize {
        self.tgt_len
    }

    pub fn links(&self) -> &BTreeSet<(usize, usize)> {
        &self.links
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i, j))
    }

    pub fn transpose(&self) -> Self {
        AlignmentMatrix {
            src_len: self.tgt_len,
            tgt_len: self.src_len,
            links: self.links.iter().map(|&(i, j)| (j, i)).collect(),
        }
    }

    /// Parses Pharaoh `i-j` links.
    pub fn parse_pharaoh(line: &str, src_len: usize, tgt_len: usize) -> Result<Self, AlignError> {
        let mut links = Vec::new();
        for tok in line.split_whitespace() {
            let bad = || AlignError::Parse {
                line: 0,
                msg: format!("bad link {tok:?}"),
            };
            let (i, j) = tok.split_once('-').ok_or_else(bad)?;
            links.push((i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?));
        }
        Self::new(src_len, tgt_len, links)
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), AlignError> {
        if self.src_len != other.src_len || self.tgt_len != other.tgt_len {
            return Err(AlignError::DimensionMismatch(
                self.src_len,
                self.tgt_len,
                other.src_len,
                other.tgt_len,
            ));
        }
        Ok(())
    }
}

impl fmt::Display for AlignmentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, j) in &self.links {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{i}-{j}")?;
            first = false;
        }
        Ok(())
    }
}

/// Links every source token to its most probable generator under
/// `lexicon`. Links to the empty word are dropped; ties go to the lowest
/// position, the empty word counting as position -1.
pub fn viterbi_align(source: &Sentence, target: &Sentence, lexicon: &Lexicon) -> AlignmentMatrix {
    let mut links = BTreeSet::new();
    for (i, s) in source.tokens().iter().enumerate() {
        let mut best = lexicon.prob(s, None).unwrap_or(0.0);
        let mut best_j = None;
        for (j, t) in target.tokens().iter().enumerate() {
            let p = lexicon.prob(s, Some(t)).unwrap_or(0.0);
            if p > best {
                best = p;
                best_j = Some(j);
            }
        }
        if let Some(j) = best_j {
            links.insert((i, j));
        }
    }
    AlignmentMatrix {
        src_len: source.len(),
        tgt_len: target.len(),
        links,
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

/// grow-diag-final-and over two directional alignments of the same pair.
/// `reverse` must already be expressed in (source, target) orientation.
pub fn symmetrize_gdfa(
    forward: &AlignmentMatrix,
    reverse: &AlignmentMatrix,
) -> Result<AlignmentMatrix, AlignError> {
    forward.check_same_shape(reverse)?;
    let (n, m) = (forward.src_len, forward.tgt_len);
    let union: BTreeSet<(usize, usize)> = forward.links.union(&reverse.links).copied().collect();
    let mut links: BTreeSet<(usize, usize)> =
        forward.links.intersection(&reverse.links).copied().collect();
    let mut src_aligned = vec![false; n];
    let mut tgt_aligned = vec![false; m];
    for &(i, j) in &links {
        src_aligned[i] = true;
        tgt_aligned[j] = true;
    }

    // grow-diag: row-major scan, repeated until nothing changes.
    loop {
        let mut added = false;
        for i in 0..n {
            for j in 0..m {
                if !links.contains(&(i, j)) {
                    continue;
                }
                for (di, dj) in NEIGHBORS {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= n as isize || nj >= m as isize {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    if (!src_aligned[ni] || !tgt_aligned[nj])
                        && union.contains(&(ni, nj))
                        && links.insert((ni, nj))
                    {
                        src_aligned[ni] = true;
                        tgt_aligned[nj] = true;
                        added = true;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }

    // final-and: directional links whose words are both still unaligned.
    for dir in [forward, reverse] {
        for &(i, j) in &dir.links {
            if !src_aligned[i] && !tgt_aligned[j] {
                links.insert((i, j));
                src_aligned[i] = true;
                tgt_aligned[j] = true;
            }
        }
    }
    Ok(AlignmentMatrix {
        src_len: n,
        tgt_len: m,
        links,
    })
}

/// Output of [`align_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusAlignment {
    pub alignments: Vec<AlignmentMatrix>,
    /// `w(s | t)`.
    pub lex_s_given_t: Lexicon,
    /// `w(t | s)`.
    pub lex_t_given_s: Lexicon,
}

/// Trains both directions, aligns every pair and symmetrizes.
pub fn align_corpus(
    bitext: &[(Sentence, Sentence)],
    iterations: usize,
) -> Result<CorpusAlignment, AlignError> {
    let forward = train_ibm1(bitext, iterations)?;
    let flipped: Vec<(Sentence, Sentence)> =
        bitext.iter().map(|(s, t)| (t.clone(), s.clone())).collect();
    let reverse = train_ibm1(&flipped, iterations)?;
    let alignments = bitext
        .iter()
        .map(|(s, t)| {
            let f = viterbi_align(s, t, &forward.lexicon);
            let r = viterbi_align(t, s, &reverse.lexicon).transpose();
            symmetrize_gdfa(&f, &r)
        })
        .collect::<Result<_, _>>()?;
    Ok(CorpusAlignment {
        alignments,
        lex_s_given_t: forward.lexicon,
        lex_t_given_s: reverse.lexicon,
    })
}

pub fn write_alignments(path: &Path, alignments: &[AlignmentMatrix]) -> Result<(), AlignError> {
    let mut text = String::new();
    for a in alignments {
        let _ = writeln!(text, "{a}");
    }
    write_atomic(path, &text).map_err(|source| AlignError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Reads a Pharaoh file; sentence lengths come from the paired corpus.
pub fn read_alignments(
    path: &Path,
    bitext: &[(Sentence, Sentence)],
) -> Result<Vec<AlignmentMatrix>, AlignError> {
    let text = read_utf8(path).map_err(|source| AlignError::Io {
        path: path.to_owned(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != bitext.len() {
        return Err(AlignError::Parse {
            line: lines.len(),
            msg: format!("{} alignment lines for {} sentence pairs", lines.len(), bitext.len()),
        });
    }
    lines
        .iter()
        .zip(bitext)
        .enumerate()
        .map(|(n, (line, (s, t)))| {
            AlignmentMatrix::parse_pharaoh(line, s.len(), t.len()).map_err(|e| match e {
                AlignError::Parse { msg, .. } => AlignError::Parse { line: n + 1, msg },
                other => other,
            })
        })
        .collect()
}
