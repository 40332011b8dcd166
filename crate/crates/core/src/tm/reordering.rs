use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::align::AlignmentMatrix;
use crate::corpus::Sentence;
use crate::io::{read_utf8, write_atomic};

use super::extract::{extract_phrases, PhrasePair};
use super::table::{split_phrase, Phrase};
use super::TmError;

/// Add-σ smoothing applied to every orientation count.
pub const REORDERING_SMOOTHING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Monotone = 0,
    Swap = 1,
    Discontinuous = 2,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [
        Orientation::Monotone,
        Orientation::Swap,
        Orientation::Discontinuous,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Orientation of a phrase occurrence with respect to the phrase that
/// precedes it on the target side, read off the word alignment.
pub fn prev_orientation(alignment: &AlignmentMatrix, pair: &PhrasePair) -> Orientation {
    let (s0, s1) = pair.src_span;
    let t0 = pair.tgt_span.0;
    if t0 == 0 {
        return if s0 == 0 {
            Orientation::Monotone
        } else {
            Orientation::Discontinuous
        };
    }
    if s0 > 0 && alignment.contains(s0 - 1, t0 - 1) {
        Orientation::Monotone
    } else if alignment.contains(s1 + 1, t0 - 1) {
        Orientation::Swap
    } else {
        Orientation::Discontinuous
    }
}

/// Orientation of a phrase occurrence with respect to the phrase that
/// follows it on the target side.
pub fn next_orientation(alignment: &AlignmentMatrix, pair: &PhrasePair) -> Orientation {
    let (s0, s1) = pair.src_span;
    let t1 = pair.tgt_span.1;
    if t1 + 1 == alignment.tgt_len() {
        return if s1 + 1 == alignment.src_len() {
            Orientation::Monotone
        } else {
            Orientation::Discontinuous
        };
    }
    if alignment.contains(s1 + 1, t1 + 1) {
        Orientation::Monotone
    } else if s0 > 0 && alignment.contains(s0 - 1, t1 + 1) {
        Orientation::Swap
    } else {
        Orientation::Discontinuous
    }
}

/// Orientation probabilities, indexed by [`Orientation::index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexReorderingEntry {
    pub prev: [f64; 3],
    pub next: [f64; 3],
}

impl LexReorderingEntry {
    fn from_counts(prev: [u64; 3], next: [u64; 3]) -> Self {
        let smooth = |c: [u64; 3]| {
            let total = c.iter().sum::<u64>() as f64 + 3.0 * REORDERING_SMOOTHING;
            c.map(|x| (x as f64 + REORDERING_SMOOTHING) / total)
        };
        LexReorderingEntry {
            prev: smooth(prev),
            next: smooth(next),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReorderingTable {
    entries: BTreeMap<Phrase, BTreeMap<Phrase, LexReorderingEntry>>,
}

impl ReorderingTable {
    pub fn get(&self, src: &[String], tgt: &[String]) -> Option<&LexReorderingEntry> {
        self.entries.get(src).and_then(|m| m.get(tgt))
    }

    pub fn insert(&mut self, src: Phrase, tgt: Phrase, entry: LexReorderingEntry) {
        self.entries.entry(src).or_default().insert(tgt, entry);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Phrase, &Phrase, &LexReorderingEntry)> {
        self.entries
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(t, e)| (s, t, e)))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `src ||| tgt ||| prev-mono prev-swap prev-disc next-mono next-swap next-disc`
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, t, e) in self.iter() {
            let _ = write!(out, "{} ||| {} |||", s.join(" "), t.join(" "));
            for p in e.prev.iter().chain(&e.next) {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TmError> {
        let mut table = ReorderingTable::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| TmError::Parse {
                line: i + 1,
                msg: msg.to_owned(),
            };
            let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err("expected 3 `|||`-separated fields"));
            }
            let src = split_phrase(fields[0]).ok_or_else(|| err("empty source phrase"))?;
            let tgt = split_phrase(fields[1]).ok_or_else(|| err("empty target phrase"))?;
            let p: Vec<f64> = fields[2]
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err("bad probability"))?;
            if p.len() != 6 {
                return Err(err("expected 6 probabilities"));
            }
            table.insert(
                src,
                tgt,
                LexReorderingEntry {
                    prev: [p[0], p[1], p[2]],
                    next: [p[3], p[4], p[5]],
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

/// Counts orientations of every extracted phrase occurrence in both
/// directions and turns them into smoothed relative frequencies.
pub fn estimate_lex_reordering(
    bitext: &[(Sentence, Sentence)],
    alignments: &[AlignmentMatrix],
    max_len: usize,
) -> Result<ReorderingTable, TmError> {
    if bitext.len() != alignments.len() {
        return Err(TmError::CountMismatch(bitext.len(), alignments.len()));
    }
    let per_sentence: Vec<Vec<(PhrasePair, Orientation, Orientation)>> = bitext
        .par_iter()
        .zip(alignments.par_iter())
        .map(|((s, t), a)| {
            Ok(extract_phrases(s, t, a, max_len)?
                .into_iter()
                .map(|p| {
                    let prev = prev_orientation(a, &p);
                    let next = next_orientation(a, &p);
                    (p, prev, next)
                })
                .collect())
        })
        .collect::<Result<_, TmError>>()?;

    let mut counts: BTreeMap<Phrase, BTreeMap<Phrase, ([u64; 3], [u64; 3])>> = BTreeMap::new();
    for (p, prev, next) in per_sentence.into_iter().flatten() {
        let c = counts.entry(p.src).or_default().entry(p.tgt).or_default();
        c.0[prev.index()] += 1;
        c.1[next.index()] += 1;
    }
    let mut table = ReorderingTable::default();
    for (s, targets) in counts {
        for (t, (prev, next)) in targets {
            table.insert(s.clone(), t, LexReorderingEntry::from_counts(prev, next));
        }
    }
    Ok(table)
}
