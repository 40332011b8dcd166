use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::align::{AlignmentMatrix, Lexicon};
use crate::corpus::Sentence;
use crate::io::{read_utf8, write_atomic};

use super::extract::{extract_phrases, PhrasePair};
use super::TmError;

pub type Phrase = Vec<String>;

/// Probability used for word pairs missing from a lexicon.
pub const LEXICAL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhraseTableEntry {
    pub p_s_given_t: f64,
    pub lex_s_given_t: f64,
    pub p_t_given_s: f64,
    pub lex_t_given_s: f64,
    /// N(s,t)
    pub count: u64,
    /// N(s)
    pub src_count: u64,
    /// N(t)
    pub tgt_count: u64,
}

impl PhraseTableEntry {
    /// The same entry seen from the other translation direction.
    pub fn inverted(&self) -> Self {
        PhraseTableEntry {
            p_s_given_t: self.p_t_given_s,
            lex_s_given_t: self.lex_t_given_s,
            p_t_given_s: self.p_s_given_t,
            lex_t_given_s: self.lex_s_given_t,
            count: self.count,
            src_count: self.tgt_count,
            tgt_count: self.src_count,
        }
    }
}

/// Source phrase -> target phrase -> scores, kept sorted so iteration and
/// serialization are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseTable {
    entries: BTreeMap<Phrase, BTreeMap<Phrase, PhraseTableEntry>>,
}

impl PhraseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, src: Phrase, tgt: Phrase, entry: PhraseTableEntry) {
        self.entries.entry(src).or_default().insert(tgt, entry);
    }

    pub fn options(&self, src: &[String]) -> Option<&BTreeMap<Phrase, PhraseTableEntry>> {
        self.entries.get(src)
    }

    pub fn get(&self, src: &[String], tgt: &[String]) -> Option<&PhraseTableEntry> {
        self.entries.get(src).and_then(|m| m.get(tgt))
    }

    pub fn sources(&self) -> impl Iterator<Item = (&Phrase, &BTreeMap<Phrase, PhraseTableEntry>)> {
        self.entries.iter()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Phrase, &Phrase, &PhraseTableEntry)> {
        self.entries
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(t, e)| (s, t, e)))
    }

    /// Number of (source, target) entries.
    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_src_len(&self) -> usize {
        self.entries.keys().map(Vec::len).max().unwrap_or(0)
    }

    /// Table for the opposite direction.
    pub fn invert(&self) -> PhraseTable {
        let mut out = PhraseTable::new();
        for (s, t, e) in self.iter() {
            out.insert(t.clone(), s.clone(), e.inverted());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, t, e) in self.iter() {
            let _ = writeln!(
                out,
                "{} ||| {} ||| {} {} {} {} ||| {} {} {}",
                s.join(" "),
                t.join(" "),
                e.p_s_given_t,
                e.lex_s_given_t,
                e.p_t_given_s,
                e.lex_t_given_s,
                e.count,
                e.src_count,
                e.tgt_count
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TmError> {
        let mut table = PhraseTable::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| TmError::Parse {
                line: i + 1,
                msg: msg.to_owned(),
            };
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err("expected 4 `|||`-separated fields"));
            }
            let src = split_phrase(fields[0]).ok_or_else(|| err("empty source phrase"))?;
            let tgt = split_phrase(fields[1]).ok_or_else(|| err("empty target phrase"))?;
            let scores: Vec<f64> = fields[2]
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err("bad score"))?;
            let counts: Vec<u64> = fields[3]
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err("bad count"))?;
            if scores.len() != 4 || counts.len() != 3 {
                return Err(err("expected 4 scores and 3 counts"));
            }
            table.insert(
                src,
                tgt,
                PhraseTableEntry {
                    p_s_given_t: scores[0],
                    lex_s_given_t: scores[1],
                    p_t_given_s: scores[2],
                    lex_t_given_s: scores[3],
                    count: counts[0],
                    src_count: counts[1],
                    tgt_count: counts[2],
                },
            );
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<(), TmError> {
        write_atomic(path, &self.to_text()).map_err(|source| TmError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, TmError> {
        let text = read_utf8(path).map_err(|source| TmError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_text(&text)
    }
}

pub(crate) fn split_phrase(s: &str) -> Option<Phrase> {
    let p: Phrase = s.split_whitespace().map(str::to_owned).collect();
    (!p.is_empty()).then_some(p)
}

/// Lexical weight of `pair` in the source-given-target direction:
/// the product over source positions of the average `w(s_i | t_j)` over
/// the target words linked to `s_i`, or `w(s_i | NULL)` when unlinked.
/// `links` are phrase-relative.
pub fn lexical_weight(pair: &PhrasePair, links: &AlignmentMatrix, lexicon: &Lexicon) -> f64 {
    let mut linked: Vec<Vec<usize>> = vec![Vec::new(); pair.src.len()];
    for &(i, j) in links.links() {
        linked[i].push(j);
    }
    let w = |s: &str, t: Option<&str>| lexicon.prob(s, t).unwrap_or(LEXICAL_FLOOR).max(LEXICAL_FLOOR);
    pair.src
        .iter()
        .zip(&linked)
        .map(|(s, js)| {
            if js.is_empty() {
                w(s, None)
            } else {
                js.iter().map(|&j| w(s, Some(&pair.tgt[j]))).sum::<f64>() / js.len() as f64
            }
        })
        .product()
}

fn reversed(pair: &PhrasePair) -> PhrasePair {
    PhrasePair {
        src: pair.tgt.clone(),
        tgt: pair.src.clone(),
        src_span: pair.tgt_span,
        tgt_span: pair.src_span,
    }
}

/// Counts every extracted phrase occurrence and scores the table by
/// relative frequency. Lexical weights keep the maximum over the
/// occurrences of each phrase pair.
pub fn build_phrase_table(
    bitext: &[(Sentence, Sentence)],
    alignments: &[AlignmentMatrix],
    lex_s_given_t: &Lexicon,
    lex_t_given_s: &Lexicon,
    max_len: usize,
) -> Result<PhraseTable, TmError> {
    if bitext.len() != alignments.len() {
        return Err(TmError::CountMismatch(bitext.len(), alignments.len()));
    }
    let per_sentence: Vec<Vec<(PhrasePair, f64, f64)>> = bitext
        .par_iter()
        .zip(alignments.par_iter())
        .map(|((s, t), a)| {
            let pairs = extract_phrases(s, t, a, max_len)?;
            Ok(pairs
                .into_iter()
                .map(|p| {
                    let inner = p.inner_alignment(a);
                    let fwd = lexical_weight(&p, &inner, lex_s_given_t);
                    let rev = lexical_weight(&reversed(&p), &inner.transpose(), lex_t_given_s);
                    (p, fwd, rev)
                })
                .collect())
        })
        .collect::<Result<_, TmError>>()?;

    // (count, best lex s|t, best lex t|s)
    let mut joint: BTreeMap<Phrase, BTreeMap<Phrase, (u64, f64, f64)>> = BTreeMap::new();
    let mut src_counts: BTreeMap<Phrase, u64> = BTreeMap::new();
    let mut tgt_counts: BTreeMap<Phrase, u64> = BTreeMap::new();
    for (p, fwd, rev) in per_sentence.into_iter().flatten() {
        *src_counts.entry(p.src.clone()).or_default() += 1;
        *tgt_counts.entry(p.tgt.clone()).or_default() += 1;
        let e = joint.entry(p.src).or_default().entry(p.tgt).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 = e.1.max(fwd);
        e.2 = e.2.max(rev);
    }
    if joint.is_empty() {
        warn!("phrase extraction produced no phrase pairs; the table is empty");
    }

    let mut table = PhraseTable::new();
    for (s, targets) in joint {
        let n_s = src_counts[&s];
        for (t, (n_st, lex_st, lex_ts)) in targets {
            let n_t = tgt_counts[&t];
            table.insert(
                s.clone(),
                t,
                PhraseTableEntry {
                    p_s_given_t: n_st as f64 / n_t as f64,
                    lex_s_given_t: lex_st,
                    p_t_given_s: n_st as f64 / n_s as f64,
                    lex_t_given_s: lex_ts,
                    count: n_st,
                    src_count: n_s,
                    tgt_count: n_t,
                },
            );
        }
    }
    Ok(table)
}
