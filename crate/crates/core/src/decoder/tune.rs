use std::collections::HashSet;

use log::info;
use rayon::prelude::*;

use crate::corpus::Sentence;
use crate::eval::BleuStats;

use super::features::dot;
use super::{nbest, DecodeError, DecoderConfig, FeatureWeights, Hypothesis, Models};

/// Grid points per coordinate, spread over `[-1, 3]` times the current
/// magnitude of the weight.
const GRID_POINTS: usize = 21;
const GRID_LO: f64 = -1.0;
const GRID_HI: f64 = 3.0;
/// Tuning stops once a round improves pool BLEU by less than this.
const MIN_GAIN: f64 = 1e-3;
const MAX_SWEEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub target: String,
    pub features: Vec<f64>,
    pub stats: BleuStats,
}

/// Accumulated n-best candidates per development sentence.
#[derive(Debug, Clone, Default)]
pub struct TuningPool {
    sentences: Vec<Vec<PoolEntry>>,
    seen: Vec<HashSet<String>>,
}

impl TuningPool {
    pub fn new(n: usize) -> Self {
        TuningPool {
            sentences: vec![Vec::new(); n],
            seen: vec![HashSet::new(); n],
        }
    }

    /// Adds a candidate unless its string is already pooled for sentence `i`.
    pub fn add(&mut self, i: usize, entry: PoolEntry) -> bool {
        if !self.seen[i].insert(entry.target.clone()) {
            return false;
        }
        self.sentences[i].push(entry);
        true
    }

    pub fn add_hypothesis(&mut self, i: usize, hyp: &Hypothesis, reference: &Sentence) -> bool {
        self.add(
            i,
            PoolEntry {
                target: hyp.target.to_string(),
                features: hyp.features.clone(),
                stats: BleuStats::from_pair(hyp.target.tokens(), reference.tokens()),
            },
        )
    }

    pub fn sentences(&self) -> &[Vec<PoolEntry>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Corpus BLEU of the candidates `weights` ranks first; ties go to the
    /// earlier pooled candidate.
    pub fn bleu(&self, weights: &[f64]) -> f64 {
        let mut total = BleuStats::default();
        for cands in &self.sentences {
            let mut best: Option<(f64, &PoolEntry)> = None;
            for c in cands {
                let s = dot(weights, &c.features);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, c));
                }
            }
            if let Some((_, c)) = best {
                total.add(&c.stats);
            }
        }
        total.bleu()
    }
}

/// Coordinate ascent on a fixed pool. A coordinate only moves when a grid
/// point strictly improves pool BLEU. Returns the new weights and their
/// pool BLEU.
pub fn optimize_on_pool(pool: &TuningPool, weights: &FeatureWeights) -> (FeatureWeights, f64) {
    let mut w = weights.values().to_vec();
    let mut current = pool.bleu(&w);
    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for k in 0..w.len() {
            let scale = if w[k] != 0.0 { w[k].abs() } else { 1.0 };
            let mut best: Option<(f64, f64)> = None;
            for g in 0..GRID_POINTS {
                let t = GRID_LO + (GRID_HI - GRID_LO) * g as f64 / (GRID_POINTS - 1) as f64;
                let mut trial = w.clone();
                trial[k] = t * scale;
                let b = pool.bleu(&trial);
                if b > best.map_or(current, |(bb, _)| bb) {
                    best = Some((b, trial[k]));
                }
            }
            if let Some((b, v)) = best {
                w[k] = v;
                current = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let mut out = weights.clone();
    for (i, v) in w.into_iter().enumerate() {
        out.set(i, v);
    }
    (out, current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub pool_size: usize,
    pub pool_bleu_before: f64,
    pub pool_bleu_after: f64,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub weights: FeatureWeights,
    pub trace: Vec<RoundTrace>,
}

/// Alternates n-best decoding of the development set with coordinate
/// ascent on the merged candidate pool.
pub fn tune_weights(
    dev_src: &[Sentence],
    dev_ref: &[Sentence],
    models: &Models<'_>,
    config: &DecoderConfig,
    rounds: usize,
    initial: FeatureWeights,
) -> Result<TuneResult, DecodeError> {
    if dev_src.is_empty() || dev_src.len() != dev_ref.len() {
        return Err(DecodeError::EmptyDev);
    }
    if initial.len() != config.num_features() {
        return Err(DecodeError::WeightLength {
            expected: config.num_features(),
            found: initial.len(),
        });
    }
    let mut pool = TuningPool::new(dev_src.len());
    let mut weights = initial;
    let mut trace: Vec<RoundTrace> = Vec::new();
    for round in 0..rounds {
        let lists = dev_src
            .par_iter()
            .map(|s| nbest(s, models, &weights, config))
            .collect::<Result<Vec<_>, _>>()?;
        let mut added = 0;
        for (i, list) in lists.iter().enumerate() {
            for h in &list.candidates {
                added += usize::from(pool.add_hypothesis(i, h, &dev_ref[i]));
            }
        }
        let before = pool.bleu(weights.values());
        let (next, after) = optimize_on_pool(&pool, &weights);
        info!(
            "tuning round {}: {} new candidates, pool BLEU {:.4} -> {:.4}",
            round + 1,
            added,
            before,
            after
        );
        let prev_after = trace.last().map(|t| t.pool_bleu_after);
        trace.push(RoundTrace {
            pool_size: pool.len(),
            pool_bleu_before: before,
            pool_bleu_after: after,
        });
        weights = next;
        if added == 0 || prev_after.is_some_and(|p| after - p < MIN_GAIN) {
            break;
        }
    }
    Ok(TuneResult { weights, trace })
}
