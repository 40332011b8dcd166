use crate::align::AlignmentMatrix;
use crate::corpus::Sentence;

use super::TmError;

/// One extracted phrase occurrence. Spans are inclusive `(start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhrasePair {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub src_span: (usize, usize),
    pub tgt_span: (usize, usize),
}

impl PhrasePair {
    /// Links of `alignment` that fall inside both spans, re-indexed
    /// relative to the phrase.
    pub fn inner_alignment(&self, alignment: &AlignmentMatrix) -> AlignmentMatrix {
        let (s0, s1) = self.src_span;
        let (t0, t1) = self.tgt_span;
        let links = alignment
            .links()
            .iter()
            .filter(|&&(i, j)| (s0..=s1).contains(&i) && (t0..=t1).contains(&j))
            .map(|&(i, j)| (i - s0, j - t0));
        AlignmentMatrix::new(s1 - s0 + 1, t1 - t0 + 1, links)
            .expect("links filtered to the phrase spans")
    }
}

pub(crate) fn check_dims(
    src: &Sentence,
    tgt: &Sentence,
    alignment: &AlignmentMatrix,
) -> Result<(), TmError> {
    if alignment.src_len() != src.len() || alignment.tgt_len() != tgt.len() {
        return Err(TmError::DimensionMismatch(
            alignment.src_len(),
            alignment.tgt_len(),
            src.len(),
            tgt.len(),
        ));
    }
    Ok(())
}

/// Every phrase pair consistent with the alignment whose spans start and
/// end on aligned words and are at most `max_len` long on both sides.
/// Unaligned boundary words are not absorbed into larger phrases.
pub fn extract_phrases(
    src: &Sentence,
    tgt: &Sentence,
    alignment: &AlignmentMatrix,
    max_len: usize,
) -> Result<Vec<PhrasePair>, TmError> {
    check_dims(src, tgt, alignment)?;
    let (n, m) = (src.len(), tgt.len());
    let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut by_tgt: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(i, j) in alignment.links() {
        by_src[i].push(j);
        by_tgt[j].push(i);
    }

    let mut out = Vec::new();
    for s0 in 0..n {
        if by_src[s0].is_empty() {
            continue;
        }
        let mut t_min = usize::MAX;
        let mut t_max = 0;
        for s1 in s0..n.min(s0 + max_len) {
            for &j in &by_src[s1] {
                t_min = t_min.min(j);
                t_max = t_max.max(j);
            }
            if by_src[s1].is_empty() || t_max - t_min + 1 > max_len {
                continue;
            }
            let consistent = (t_min..=t_max).all(|j| by_tgt[j].iter().all(|&i| (s0..=s1).contains(&i)));
            if consistent {
                out.push(PhrasePair {
                    src: src.tokens()[s0..=s1].to_vec(),
                    tgt: tgt.tokens()[t_min..=t_max].to_vec(),
                    src_span: (s0, s1),
                    tgt_span: (t_min, t_max),
                });
            }
        }
    }
    Ok(out)
}
