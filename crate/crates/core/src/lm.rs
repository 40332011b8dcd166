//! Interpolated Kneser-Ney n-gram language model with ARPA I/O.
//!
//! Probabilities are stored the way ARPA files store interpolated models:
//! every observed n-gram carries its fully interpolated log10 probability
//! and every observed context carries the log10 interpolation weight that
//! is applied when backing off to a shorter history.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::corpus::Sentence;
use crate::io::{read_utf8, write_atomic};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// log10 probability written for tokens that are never predicted (`<s>`).
const LOG_ZERO: f64 = -99.0;
const FALLBACK_DISCOUNT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("language model order must be at least 1")]
    InvalidOrder,
    #[error("cannot train a language model on an empty corpus")]
    EmptyCorpus,
    #[error("ARPA line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    log_prob: f64,
    log_backoff: f64,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    /// `grams[k]` holds the (k+1)-grams.
    grams: Vec<HashMap<Box<[TokenId]>, Entry>>,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

impl NGramModel {
    fn with_vocab(order: usize) -> Self {
        let mut m = NGramModel {
            order,
            vocab: Vec::new(),
            index: HashMap::new(),
            grams: vec![HashMap::new(); order],
            bos: 0,
            eos: 0,
            unk: 0,
        };
        m.bos = m.intern(BOS);
        m.eos = m.intern(EOS);
        m.unk = m.intern(UNK);
        m
    }

    fn intern(&mut self, tok: &str) -> TokenId {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        let id = self.vocab.len() as TokenId;
        self.vocab.push(tok.to_owned());
        self.index.insert(tok.to_owned(), id);
        id
    }

    /// Trains an interpolated Kneser-Ney model with one absolute discount
    /// per order, `D = n1 / (n1 + 2 n2)`.
    pub fn train(corpus: &[Sentence], order: usize) -> Result<Self, LmError> {
        if order == 0 {
            return Err(LmError::InvalidOrder);
        }
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut m = NGramModel::with_vocab(order);
        let padded: Vec<Vec<TokenId>> = corpus
            .iter()
            .map(|s| {
                let mut v = Vec::with_capacity(s.len() + 2);
                v.push(m.bos);
                v.extend(s.tokens().iter().map(|t| m.intern(t)));
                v.push(m.eos);
                v
            })
            .collect();

        // Raw counts of every k-gram that predicts a real token (so never a
        // bare "<s>").
        let mut raw: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); order];
        for sent in &padded {
            for end in 1..sent.len() {
                for k in 1..=order.min(end + 1) {
                    let g = &sent[end + 1 - k..=end];
                    *raw[k - 1].entry(g.to_vec()).or_default() += 1;
                }
            }
        }

        // Adjusted counts: continuation counts below the top order, except
        // for n-grams anchored at the sentence start.
        let mut adjusted: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); order];
        adjusted[order - 1] = raw[order - 1].clone();
        for k in (1..order).rev() {
            let mut cont: HashMap<Vec<TokenId>, u64> = HashMap::new();
            for g in raw[k].keys() {
                *cont.entry(g[1..].to_vec()).or_default() += 1;
            }
            for (g, &c) in &raw[k - 1] {
                let a = if g[0] == m.bos { c } else { cont.get(g).copied().unwrap_or(0) };
                if a > 0 {
                    adjusted[k - 1].insert(g.clone(), a);
                }
            }
        }

        let discounts: Vec<f64> = adjusted
            .iter()
            .enumerate()
            .map(|(k, counts)| {
                let n1 = counts.values().filter(|&&c| c == 1).count() as f64;
                let n2 = counts.values().filter(|&&c| c == 2).count() as f64;
                if n1 == 0.0 || n2 == 0.0 {
                    warn!(
                        "order {}: count-of-counts n1={} n2={}, using discount {}",
                        k + 1,
                        n1,
                        n2,
                        FALLBACK_DISCOUNT
                    );
                    FALLBACK_DISCOUNT
                } else {
                    n1 / (n1 + 2.0 * n2)
                }
            })
            .collect();

        // Per-context totals and number of distinct continuations.
        let mut context_stats: Vec<HashMap<Vec<TokenId>, (u64, u64)>> = vec![HashMap::new(); order];
        for (k, counts) in adjusted.iter().enumerate() {
            for (g, &c) in counts {
                let e = context_stats[k].entry(g[..k].to_vec()).or_default();
                e.0 += c;
                e.1 += 1;
            }
        }

        // Unigrams interpolate with the uniform distribution over every
        // predictable token: the vocabulary minus "<s>", plus "<unk>".
        let predictable = (m.vocab.len() - 1) as f64;
        let (total1, types1) = context_stats[0].get(&Vec::new()).copied().unwrap_or((0, 0));
        let gamma1 = discounts[0] * types1 as f64 / total1 as f64;
        for id in 0..m.vocab.len() as TokenId {
            let log_prob = if id == m.bos {
                LOG_ZERO
            } else {
                let a = adjusted[0].get(&vec![id]).copied().unwrap_or(0) as f64;
                let p = (a - discounts[0]).max(0.0) / total1 as f64 + gamma1 / predictable;
                p.log10()
            };
            m.grams[0].insert(
                vec![id].into_boxed_slice(),
                Entry {
                    log_prob,
                    log_backoff: 0.0,
                },
            );
        }

        for k in 1..order {
            let mut keys: Vec<&Vec<TokenId>> = adjusted[k].keys().collect();
            keys.sort();
            let mut new_entries = Vec::with_capacity(keys.len());
            for g in keys {
                let (total, _) = context_stats[k][&g[..k]];
                let gamma = context_gamma(&context_stats[k], &g[..k], discounts[k]);
                let lower = 10f64.powf(m.cond_log10(&g[1..k], g[k]));
                let p = (adjusted[k][g] as f64 - discounts[k]) / total as f64 + gamma * lower;
                new_entries.push((g.clone().into_boxed_slice(), p.log10()));
            }
            for (g, lp) in new_entries {
                m.grams[k].insert(
                    g,
                    Entry {
                        log_prob: lp,
                        log_backoff: 0.0,
                    },
                );
            }
        }

        // Interpolation weights become backoff weights of the context n-grams.
        for k in 0..order {
            for (ctx, &(total, types)) in &context_stats[k] {
                if k == 0 {
                    continue;
                }
                let gamma = discounts[k] * types as f64 / total as f64;
                if let Some(e) = m.grams[k - 1].get_mut(ctx.as_slice()) {
                    e.log_backoff = gamma.log10();
                }
            }
        }
        Ok(m)
    }

    /// A unigram model giving the same probability to each token in
    /// `tokens`, the end marker and the unknown token.
    pub fn uniform<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut m = NGramModel::with_vocab(1);
        for t in tokens {
            m.intern(t);
        }
        let lp = -((m.vocab.len() - 1) as f64).log10();
        for id in 0..m.vocab.len() as TokenId {
            m.grams[0].insert(
                vec![id].into_boxed_slice(),
                Entry {
                    log_prob: if id == m.bos { LOG_ZERO } else { lp },
                    log_backoff: 0.0,
                },
            );
        }
        m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token) && token != UNK
    }

    /// Every token that can be predicted: vocabulary without `<s>`.
    pub fn predictable_tokens(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i as TokenId != self.bos)
            .map(|(_, t)| t.as_str())
    }

    pub fn token_id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    pub fn bos_id(&self) -> TokenId {
        self.bos
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos
    }

    /// Number of stored n-grams per order.
    pub fn counts(&self) -> Vec<usize> {
        self.grams.iter().map(HashMap::len).collect()
    }

    /// log10 P(word | context) following the backoff chain. Only the last
    /// `order - 1` context tokens are used.
    pub fn cond_log10(&self, context: &[TokenId], word: TokenId) -> f64 {
        let ctx = &context[context.len().saturating_sub(self.order - 1)..];
        let mut acc = 0.0;
        let mut key: Vec<TokenId> = Vec::with_capacity(ctx.len() + 1);
        for start in 0..=ctx.len() {
            key.clear();
            key.extend_from_slice(&ctx[start..]);
            key.push(word);
            let k = key.len() - 1;
            if let Some(e) = self.grams[k].get(key.as_slice()) {
                return acc + e.log_prob;
            }
            if k > 0 {
                if let Some(c) = self.grams[k - 1].get(&ctx[start..]) {
                    acc += c.log_backoff;
                }
            }
        }
        // Unreachable for ids from this model; unknown ids score as <unk>.
        acc + self.grams[0][&[self.unk][..]].log_prob
    }

    /// Convenience wrapper of [`cond_log10`](Self::cond_log10) over strings.
    pub fn cond_log10_str(&self, context: &[&str], word: &str) -> f64 {
        let ctx: Vec<TokenId> = context
            .iter()
            .map(|t| if *t == BOS { self.bos } else { self.token_id(t) })
            .collect();
        self.cond_log10(&ctx, self.token_id(word))
    }

    /// Sum of log10 probabilities of `tokens` after `<s>`, without the end
    /// marker.
    pub fn prefix_log10(&self, tokens: &[String]) -> f64 {
        let mut hist = vec![self.bos];
        let mut total = 0.0;
        for t in tokens {
            let id = self.token_id(t);
            total += self.cond_log10(&hist, id);
            hist.push(id);
        }
        total
    }

    /// log10 probability of a whole sentence, end marker included.
    pub fn logprob(&self, sentence: &Sentence) -> f64 {
        let mut hist = vec![self.bos];
        hist.extend(sentence.tokens().iter().map(|t| self.token_id(t)));
        self.prefix_log10(sentence.tokens()) + self.cond_log10(&hist, self.eos)
    }

    /// `10^(-total log10 prob / predicted tokens)`, end markers counted.
    pub fn perplexity(&self, corpus: &[Sentence]) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for s in corpus {
            total += self.logprob(s);
            n += s.len() + 1;
        }
        10f64.powf(-total / n as f64)
    }

    /// Stored n-grams of length `n` as (tokens, log10 prob, log10 backoff).
    pub fn ngrams(&self, n: usize) -> Vec<(Vec<&str>, f64, f64)> {
        let mut out: Vec<_> = self.grams[n - 1]
            .iter()
            .map(|(g, e)| {
                (
                    g.iter().map(|&i| self.vocab[i as usize].as_str()).collect::<Vec<_>>(),
                    e.log_prob,
                    e.log_backoff,
                )
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for (k, g) in self.grams.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", k + 1, g.len());
        }
        for k in 1..=self.order {
            let _ = write!(out, "\n\\{k}-grams:\n");
            for (tokens, lp, bo) in self.ngrams(k) {
                let _ = write!(out, "{}\t{}", lp, tokens.join(" "));
                if k < self.order && bo != 0.0 {
                    let _ = write!(out, "\t{bo}");
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str) -> Result<Self, LmError> {
        let err = |line: usize, msg: &str| LmError::Parse {
            line,
            msg: msg.to_owned(),
        };
        let mut declared: Vec<usize> = Vec::new();
        let mut section: Option<usize> = None;
        let mut saw_data = false;
        let mut ended = false;
        let mut entries: Vec<Vec<(Vec<String>, Entry)>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line == "\\data\\" {
                saw_data = true;
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                let (k, n) = rest.split_once('=').ok_or_else(|| err(ln, "bad ngram count"))?;
                let k: usize = k.trim().parse().map_err(|_| err(ln, "bad order"))?;
                let n: usize = n.trim().parse().map_err(|_| err(ln, "bad count"))?;
                if k != declared.len() + 1 {
                    return Err(err(ln, "ngram counts out of order"));
                }
                declared.push(n);
                entries.push(Vec::new());
                continue;
            }
            if line.starts_with('\\') && line.ends_with("-grams:") {
                let k: usize = line[1..line.len() - 7]
                    .parse()
                    .map_err(|_| err(ln, "bad section header"))?;
                if k == 0 || k > declared.len() {
                    return Err(err(ln, "section for undeclared order"));
                }
                section = Some(k);
                continue;
            }
            let k = section.ok_or_else(|| err(ln, "entry outside an n-gram section"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < k + 1 || fields.len() > k + 2 {
                return Err(err(ln, "wrong number of fields"));
            }
            let log_prob: f64 = fields[0].parse().map_err(|_| err(ln, "bad probability"))?;
            let log_backoff: f64 = match fields.get(k + 1) {
                Some(b) => b.parse().map_err(|_| err(ln, "bad backoff"))?,
                None => 0.0,
            };
            entries[k - 1].push((
                fields[1..=k].iter().map(|s| (*s).to_owned()).collect(),
                Entry {
                    log_prob,
                    log_backoff,
                },
            ));
        }
        if !saw_data || declared.is_empty() {
            return Err(err(0, "missing \\data\\ header"));
        }
        if !ended {
            return Err(err(0, "missing \\end\\ marker"));
        }
        for (k, (d, e)) in declared.iter().zip(&entries).enumerate() {
            if *d != e.len() {
                return Err(err(0, &format!("order {} declares {} entries, found {}", k + 1, d, e.len())));
            }
        }
        let mut m = NGramModel::with_vocab(declared.len());
        for (k, list) in entries.into_iter().enumerate() {
            for (toks, e) in list {
                let ids: Vec<TokenId> = toks.iter().map(|t| m.intern(t)).collect();
                m.grams[k].insert(ids.into_boxed_slice(), e);
            }
        }
        // Guarantee the markers are queryable even in foreign files.
        for id in [m.bos, m.eos, m.unk] {
            m.grams[0].entry(vec![id].into_boxed_slice()).or_insert(Entry {
                log_prob: LOG_ZERO,
                log_backoff: 0.0,
            });
        }
        Ok(m)
    }

    pub fn write_arpa(&self, path: &Path) -> Result<(), LmError> {
        write_atomic(path, &self.to_arpa()).map_err(|source| LmError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read_arpa(path: &Path) -> Result<Self, LmError> {
        let text = read_utf8(path).map_err(|source| LmError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_arpa(&text)
    }
}

fn context_gamma(stats: &HashMap<Vec<TokenId>, (u64, u64)>, ctx: &[TokenId], discount: f64) -> f64 {
    let (total, types) = stats[ctx];
    discount * types as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::parse(l)).collect()
    }

    #[test]
    fn unigram_kn_matches_hand_computation() {
        // Tokens predicted: a a b </s>. Raw counts a=2, b=1, </s>=1, total 4.
        // n1 = 2, n2 = 1 -> D = 2 / (2 + 2) = 0.5. Predictable vocabulary
        // {a, b, </s>, <unk>} has size 4; leftover mass 0.5 * 3 / 4 = 0.375.
        // p(a) = 1.5/4 + 0.375/4 = 0.46875; p(b) = p(</s>) = 0.21875;
        // p(<unk>) = 0.09375.
        let m = NGramModel::train(&corpus(&["a a b"]), 1).unwrap();
        let p = |w: &str| 10f64.powf(m.cond_log10_str(&[], w));
        assert!((p("a") - 0.46875).abs() < 1e-12);
        assert!((p("b") - 0.21875).abs() < 1e-12);
        assert!((p(EOS) - 0.21875).abs() < 1e-12);
        assert!((p("zzz") - 0.09375).abs() < 1e-12);
    }

    #[test]
    fn empty_sentence_scores_end_marker_only() {
        let m = NGramModel::train(&corpus(&["a b", "b"]), 2).unwrap();
        let lp = m.logprob(&Sentence::empty());
        assert_eq!(lp, m.cond_log10_str(&[BOS], EOS));
    }

    #[test]
    fn one_token_on_unigram_model() {
        let m = NGramModel::train(&corpus(&["a a b"]), 1).unwrap();
        let lp = m.logprob(&Sentence::parse("a"));
        let expected = 0.46875f64.log10() + 0.21875f64.log10();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn bigram_backoff_chain_by_hand() {
        // Bigram model over "a b" and "b". Bigram adjusted (raw) counts:
        // <s> a:1, a b:1, b </s>:2, <s> b:1 -> n1=3, n2=1, D2 = 3/5.
        // Unigram continuation counts: a:1 (<s>), b:2 (a, <s>), </s>:1 (b)
        // -> n1=2, n2=1, D1 = 1/2; total 4, 3 types; predictable size 4
        // (a, b, </s>, <unk>). p1(a) = 0.5/4 + 0.5*3/4/4 = 0.21875,
        // p1(b) = 1.5/4 + 0.09375 = 0.46875, p1(</s>) = 0.21875.
        let m = NGramModel::train(&corpus(&["a b", "b"]), 2).unwrap();
        let d2: f64 = 3.0 / 5.0;
        let p1_a: f64 = 0.21875;
        let p1_b = 0.46875;
        let p1_eos = 0.21875;
        // Context <s>: total 2, types 2.
        let g_bos = d2 * 2.0 / 2.0;
        let p_a_bos = (1.0 - d2) / 2.0 + g_bos * p1_a;
        // Context a: total 1, types 1.
        let g_a = d2;
        let p_b_a = (1.0 - d2) / 1.0 + g_a * p1_b;
        // Context b: total 2, types 1; "b a" unseen -> backoff.
        let g_b = d2 * 1.0 / 2.0;
        let p_a_b = g_b * p1_a;
        let p_eos_a = g_a * p1_eos;
        // Sentence "a b a": <s> a, a b, b a, a </s>.
        let expected = p_a_bos.log10() + p_b_a.log10() + p_a_b.log10() + p_eos_a.log10();
        let got = m.logprob(&Sentence::parse("a b a"));
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn conditional_distributions_normalize() {
        let m = NGramModel::train(&corpus(&["a b c a", "b c", "c a b b a", "a"]), 3).unwrap();
        for k in 1..m.order() {
            for (ctx, _, _) in m.ngrams(k) {
                if ctx.last() == Some(&EOS) {
                    continue;
                }
                let sum: f64 = m
                    .predictable_tokens()
                    .map(|w| 10f64.powf(m.cond_log10_str(&ctx, w)))
                    .sum();
                assert!((sum - 1.0).abs() < 1e-9, "context {ctx:?} sums to {sum}");
            }
        }
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let m = NGramModel::uniform(["x", "y", "z"]);
        let v = m.predictable_tokens().count() as f64;
        assert_eq!(v, 5.0);
        let ppl = m.perplexity(&corpus(&["x y", "z z z x"]));
        assert!((ppl - v).abs() / v < 1e-9);
    }

    #[test]
    fn arpa_roundtrip_is_exact() {
        let m = NGramModel::train(&corpus(&["a b c", "b c d", "c d a b"]), 3).unwrap();
        let text = m.to_arpa();
        let back = NGramModel::from_arpa(&text).unwrap();
        assert_eq!(back.to_arpa(), text);
        for s in ["a b c d", "d d", "q a"] {
            let s = Sentence::parse(s);
            assert_eq!(m.logprob(&s), back.logprob(&s));
        }
    }

    #[test]
    fn arpa_parse_errors_carry_line_numbers() {
        let bad = "\\data\\\nngram 1=1\n\n\\1-grams:\nnotanumber a\n\\end\\\n";
        match NGramModel::from_arpa(bad) {
            Err(LmError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(NGramModel::from_arpa("\\data\\\nngram 1=2\n\\1-grams:\n-1 a\n\\end\\\n").is_err());
    }

    #[test]
    fn training_rejects_bad_input() {
        assert!(matches!(NGramModel::train(&[], 3), Err(LmError::EmptyCorpus)));
        assert!(matches!(
            NGramModel::train(&corpus(&["a"]), 0),
            Err(LmError::InvalidOrder)
        ));
    }

    #[test]
    fn perplexity_of_single_sentence_matches_per_sentence_value() {
        let m = NGramModel::train(&corpus(&["a b c", "c b a"]), 2).unwrap();
        let s = Sentence::parse("a b");
        let direct = 10f64.powf(-m.logprob(&s) / 3.0);
        assert!((m.perplexity(std::slice::from_ref(&s)) - direct).abs() < 1e-12);
    }
}
