use crate::align::AlignmentMatrix;
use crate::corpus::Sentence;

use super::{check_lengths, EvalError};

/// Swapped adjacent source block pairs `(A, B)` of one sentence, with
/// inclusive spans.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReorderingSet {
    pub reorderings: Vec<((usize, usize), (usize, usize))>,
    pub src_len: usize,
}

impl ReorderingSet {
    /// `Σ (|A| + |B|) / I`.
    pub fn score(&self) -> f64 {
        if self.src_len == 0 {
            return 0.0;
        }
        let moved: usize = self
            .reorderings
            .iter()
            .map(|&((a0, a1), (b0, b1))| (a1 - a0 + 1) + (b1 - b0 + 1))
            .sum();
        moved as f64 / self.src_len as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RQuantityReport {
    pub average: f64,
    pub sentences: Vec<ReorderingSet>,
}

struct Blocks {
    /// Target positions per source word, unaligned words borrowing from a
    /// neighbour.
    targets: Vec<Vec<usize>>,
    sources_of: Vec<Vec<usize>>,
}

impl Blocks {
    fn new(a: &AlignmentMatrix) -> Option<Self> {
        let n = a.src_len();
        let mut own: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(i, j) in a.links() {
            own[i].push(j);
        }
        let aligned: Vec<usize> = (0..n).filter(|&i| !own[i].is_empty()).collect();
        let first = *aligned.first()?;
        let mut targets = own.clone();
        let mut left = None;
        for i in 0..n {
            if own[i].is_empty() {
                targets[i] = own[left.unwrap_or(first)].clone();
            } else {
                left = Some(i);
            }
        }
        let mut sources_of = vec![Vec::new(); a.tgt_len()];
        for (i, ts) in targets.iter().enumerate() {
            for &j in ts {
                sources_of[j].push(i);
            }
        }
        Some(Blocks { targets, sources_of })
    }

    /// Target interval of `a..=b` when the span is a consistent block.
    fn block(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        let ts = self.targets[a..=b].iter().flatten();
        let lo = *ts.clone().min()?;
        let hi = *ts.max()?;
        let inside = (lo..=hi).all(|j| self.sources_of[j].iter().all(|&i| (a..=b).contains(&i)));
        inside.then_some((lo, hi))
    }

    fn decompose(&self, a: usize, b: usize, out: &mut Vec<((usize, usize), (usize, usize))>) {
        if a >= b {
            return;
        }
        for k in a..b {
            if let (Some(left), Some(right)) = (self.block(a, k), self.block(k + 1, b)) {
                if left.0 > right.1 {
                    out.push(((a, k), (k + 1, b)));
                }
                self.decompose(a, k, out);
                self.decompose(k + 1, b, out);
                return;
            }
        }
        // No binary split: either an atom or a non-binarizable reordering
        // whose largest proper sub-blocks are decomposed further.
        let mut children = Vec::new();
        let mut i = a;
        while i <= b {
            let end = (i..=b)
                .rev()
                .find(|&e| (i, e) != (a, b) && self.block(i, e).is_some());
            match end {
                Some(e) => {
                    children.push((i, e));
                    i = e + 1;
                }
                None => i += 1,
            }
        }
        let Some(&(_, first_end)) = children.first() else { return };
        if first_end < b {
            out.push(((a, first_end), (first_end + 1, b)));
        }
        for (c0, c1) in children {
            self.decompose(c0, c1, out);
        }
    }
}

/// Reorderings of one aligned sentence pair.
pub fn rquantity_sentence(alignment: &AlignmentMatrix) -> ReorderingSet {
    let n = alignment.src_len();
    let mut reorderings = Vec::new();
    if let Some(blocks) = Blocks::new(alignment) {
        blocks.decompose(0, n - 1, &mut reorderings);
    }
    ReorderingSet {
        reorderings,
        src_len: n,
    }
}

/// Mean sentence RQuantity over a corpus.
pub fn rquantity(
    pairs: &[(Sentence, Sentence)],
    alignments: &[AlignmentMatrix],
) -> Result<RQuantityReport, EvalError> {
    check_lengths("sentence pairs vs alignments", pairs.len(), alignments.len())?;
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sentences = Vec::with_capacity(pairs.len());
    for (index, ((s, t), a)) in pairs.iter().zip(alignments).enumerate() {
        if (a.src_len(), a.tgt_len()) != (s.len(), t.len()) {
            return Err(EvalError::AlignmentShape {
                index,
                found: (a.src_len(), a.tgt_len()),
                expected: (s.len(), t.len()),
            });
        }
        sentences.push(rquantity_sentence(a));
    }
    let average = sentences.iter().map(ReorderingSet::score).sum::<f64>() / sentences.len() as f64;
    Ok(RQuantityReport { average, sentences })
}
