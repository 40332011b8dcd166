use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Sentence;

use super::{check_lengths, BleuStats, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignificanceVerdict {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    pub confident_winner: Option<Winner>,
}

impl SignificanceVerdict {
    pub fn samples(&self) -> usize {
        self.wins_a + self.wins_b + self.ties
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of resample `index`, independent of how resamples are scheduled.
fn sub_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Paired bootstrap resampling: both systems are scored with corpus BLEU
/// on the same resampled sentence indices.
pub fn bootstrap_significance(
    hyps_a: &[Sentence],
    hyps_b: &[Sentence],
    refs: &[Sentence],
    samples: usize,
    level: f64,
    seed: u64,
) -> Result<SignificanceVerdict, EvalError> {
    check_lengths("system A vs references", hyps_a.len(), refs.len())?;
    check_lengths("system B vs references", hyps_b.len(), refs.len())?;
    if refs.is_empty() {
        return Err(EvalError::Empty);
    }
    if samples == 0 {
        return Err(EvalError::NoSamples);
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(EvalError::BadLevel(level));
    }
    let stats = |hyps: &[Sentence]| -> Vec<BleuStats> {
        hyps.iter()
            .zip(refs)
            .map(|(h, r)| BleuStats::from_pair(h.tokens(), r.tokens()))
            .collect()
    };
    let (sa, sb) = (stats(hyps_a), stats(hyps_b));
    let n = refs.len();
    let outcomes: Vec<std::cmp::Ordering> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, k));
            let mut ta = BleuStats::default();
            let mut tb = BleuStats::default();
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                ta.add(&sa[i]);
                tb.add(&sb[i]);
            }
            ta.bleu().total_cmp(&tb.bleu())
        })
        .collect();
    let wins_a = outcomes.iter().filter(|o| o.is_gt()).count();
    let wins_b = outcomes.iter().filter(|o| o.is_lt()).count();
    let ties = samples - wins_a - wins_b;
    let need = level * samples as f64;
    let confident_winner = if wins_a as f64 >= need {
        Some(Winner::A)
    } else if wins_b as f64 >= need {
        Some(Winner::B)
    } else {
        None
    };
    Ok(SignificanceVerdict {
        wins_a,
        wins_b,
        ties,
        confident_winner,
    })
}
