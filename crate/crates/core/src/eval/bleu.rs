use std::collections::HashMap;
use std::fmt;

use crate::corpus::Sentence;

use super::{check_lengths, EvalError};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics: clipped n-gram matches, hypothesis n-gram
/// totals and lengths. Corpus scores sum these before combining.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    pub fn from_pair(hyp: &[String], reference: &[String]) -> Self {
        let mut s = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            s.matches[n - 1] = h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len >= self.ref_len {
            1.0
        } else if self.hyp_len == 0 {
            0.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    pub fn report(&self) -> BleuReport {
        let precisions: [f64; MAX_ORDER] = std::array::from_fn(|n| {
            if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            }
        });
        let bp = self.brevity_penalty();
        // Orders the hypotheses are too short to contain are left out of
        // the geometric mean instead of zeroing it.
        let defined: Vec<f64> = (0..MAX_ORDER)
            .filter(|&n| self.totals[n] > 0)
            .map(|n| precisions[n])
            .collect();
        BleuReport {
            bleu: combine(&defined, bp),
            precisions,
            brevity_penalty: bp,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }

    pub fn bleu(&self) -> f64 {
        self.report().bleu
    }
}

fn combine(precisions: &[f64], bp: f64) -> f64 {
    if precisions.is_empty() || precisions.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    let mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
    bp * mean.exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuReport {
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuReport {
    /// Hypothesis length over reference length.
    pub fn ratio(&self) -> f64 {
        if self.ref_len == 0 {
            0.0
        } else {
            self.hyp_len as f64 / self.ref_len as f64
        }
    }

    /// Single line for scripts: `BLEU=b p1/p2/p3/p4 BP=bp ratio=r`.
    pub fn machine_line(&self) -> String {
        let p = self.precisions;
        format!(
            "BLEU={:.6} {:.6}/{:.6}/{:.6}/{:.6} BP={:.6} ratio={:.6}",
            self.bleu,
            p[0],
            p[1],
            p[2],
            p[3],
            self.brevity_penalty,
            self.ratio()
        )
    }
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BLEU = {:.2}", self.bleu * 100.0)?;
        for (n, p) in self.precisions.iter().enumerate() {
            writeln!(f, "p{} = {:.4}", n + 1, p)?;
        }
        writeln!(f, "brevity penalty = {:.4}", self.brevity_penalty)?;
        writeln!(f, "hypothesis length = {}", self.hyp_len)?;
        writeln!(f, "reference length = {}", self.ref_len)?;
        write!(f, "ratio = {:.4}", self.ratio())
    }
}

/// Corpus BLEU with one reference per hypothesis.
pub fn bleu_corpus(hyps: &[Sentence], refs: &[Sentence]) -> Result<BleuReport, EvalError> {
    check_lengths("hypotheses vs references", hyps.len(), refs.len())?;
    if hyps.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::from_pair(h.tokens(), r.tokens()));
    }
    Ok(total.report())
}

/// Sentence BLEU with add-one smoothing on orders 2 to 4.
pub fn bleu_sentence(hyp: &Sentence, reference: &Sentence) -> f64 {
    let s = BleuStats::from_pair(hyp.tokens(), reference.tokens());
    let precisions: [f64; MAX_ORDER] = std::array::from_fn(|n| {
        if n == 0 {
            if s.totals[0] == 0 {
                0.0
            } else {
                s.matches[0] as f64 / s.totals[0] as f64
            }
        } else {
            (s.matches[n] + 1) as f64 / (s.totals[n] + 1) as f64
        }
    });
    combine(&precisions, s.brevity_penalty())
}
