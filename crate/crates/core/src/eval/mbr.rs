use crate::corpus::Sentence;

use super::{bleu_sentence, check_lengths, EvalError};

pub const MIN_MBR_CANDIDATES: usize = 3;

/// Index of the candidate with the least expected loss
/// `Σ_{t ≠ t'} (1 - BLEU(t', t)) w(t)`; ties go to the earliest.
pub fn mbr_select(candidates: &[Sentence], posterior: Option<&[f64]>) -> Result<usize, EvalError> {
    mbr_select_at(0, candidates, posterior)
}

fn mbr_select_at(index: usize, candidates: &[Sentence], posterior: Option<&[f64]>) -> Result<usize, EvalError> {
    if candidates.len() < MIN_MBR_CANDIDATES {
        return Err(EvalError::TooFewCandidates {
            index,
            found: candidates.len(),
        });
    }
    if let Some(w) = posterior {
        if w.len() != candidates.len() || w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(EvalError::BadPosterior { index });
        }
    }
    let weight = |i: usize| posterior.map_or(1.0, |w| w[i]);
    let mut best = (f64::INFINITY, 0);
    for (j, hyp) in candidates.iter().enumerate() {
        let loss: f64 = candidates
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(i, r)| (1.0 - bleu_sentence(hyp, r)) * weight(i))
            .sum();
        if loss < best.0 {
            best = (loss, j);
        }
    }
    Ok(best.1)
}

/// Picks one hypothesis per sentence from the systems' outputs.
pub fn mbr_combine(
    lists: &[Vec<Sentence>],
    posteriors: Option<&[Vec<f64>]>,
) -> Result<Vec<Sentence>, EvalError> {
    if let Some(p) = posteriors {
        check_lengths("candidate lists vs posteriors", lists.len(), p.len())?;
    }
    lists
        .iter()
        .enumerate()
        .map(|(i, cands)| {
            let w = posteriors.map(|p| p[i].as_slice());
            mbr_select_at(i, cands, w).map(|j| cands[j].clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Sentence {
        Sentence::parse(x)
    }

    #[test]
    fn identical_candidates_pick_first() {
        let c = vec![s("a b c"), s("a b c"), s("a b c")];
        assert_eq!(mbr_select(&c, None).unwrap(), 0);
    }

    #[test]
    fn duplicated_hypothesis_wins() {
        let c = vec![s("y z w v"), s("a b c d"), s("a b c d")];
        assert_eq!(mbr_select(&c, None).unwrap(), 1);
    }

    #[test]
    fn posterior_shifts_choice() {
        let c = vec![s("a b c d"), s("a b c d"), s("w x y z")];
        assert_eq!(mbr_select(&c, None).unwrap(), 0);
        // Only agreement with the heavy third candidate counts.
        assert_eq!(mbr_select(&c, Some(&[0.0, 0.0, 1.0])).unwrap(), 2);
        assert_eq!(mbr_select(&c, Some(&[0.1, 0.1, 5.0])).unwrap(), 2);
        assert!(mbr_select(&c, Some(&[1.0, -1.0, 1.0])).is_err());
    }

    #[test]
    fn rejects_short_lists() {
        let err = mbr_combine(&[vec![s("a"), s("b")]], None).unwrap_err();
        assert!(err.to_string().contains("at least 3"));
    }
}
