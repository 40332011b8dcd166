use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::LN_10;
use std::fmt::Write as _;

use log::warn;

use crate::corpus::Sentence;
use crate::lm::TokenId;
use crate::tm::Orientation;

use super::features::{dot, index, log_or_floor, FEATURE_NAMES, OOV_LOG_FLOOR};
use super::{decoding_orientation, distortion_cost, DecodeError, DecoderConfig, FeatureWeights, Models};

/// One phrase application in a derivation, in output order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedPhrase {
    /// Inclusive source span.
    pub src_span: (usize, usize),
    pub tgt: Vec<String>,
}

/// A complete translation with its feature vector and model score.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub target: Sentence,
    pub features: Vec<f64>,
    pub score: f64,
    pub phrases: Vec<AppliedPhrase>,
}

/// Distinct-string candidates, best first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NBestList {
    pub candidates: Vec<Hypothesis>,
}

impl NBestList {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn best(&self) -> Option<&Hypothesis> {
        self.candidates.first()
    }
}

/// `id ||| tokens ||| name:value ... ||| score`, one line per candidate.
pub fn write_nbest(sentence_id: usize, list: &NBestList) -> String {
    let mut out = String::new();
    for h in &list.candidates {
        let _ = write!(out, "{sentence_id} ||| {} |||", h.target);
        for (n, v) in FEATURE_NAMES.iter().zip(&h.features) {
            let _ = write!(out, " {n}:{v}");
        }
        let _ = writeln!(out, " ||| {}", h.score);
    }
    out
}

/// Highest-scoring translation of `source`.
pub fn decode(
    source: &Sentence,
    models: &Models<'_>,
    weights: &FeatureWeights,
    config: &DecoderConfig,
) -> Result<Hypothesis, DecodeError> {
    let mut list = nbest(source, models, weights, &DecoderConfig { nbest_size: 1, ..config.clone() })?;
    Ok(list.candidates.swap_remove(0))
}

/// Up to `config.nbest_size` distinct translations, extracted exactly from
/// the search graph. Never empty.
pub fn nbest(
    source: &Sentence,
    models: &Models<'_>,
    weights: &FeatureWeights,
    config: &DecoderConfig,
) -> Result<NBestList, DecodeError> {
    config.validate()?;
    let nf = config.num_features();
    if weights.len() != nf {
        return Err(DecodeError::WeightLength {
            expected: nf,
            found: weights.len(),
        });
    }
    let k = config.nbest_size.max(1);
    let mut search = Search::new(source, models, weights, config);
    search.run();
    if search.finals.is_empty() {
        warn!("no complete hypothesis within the distortion limit, retrying without it");
        let relaxed = DecoderConfig {
            distortion_limit: None,
            ..config.clone()
        };
        search = Search::new(source, models, weights, &relaxed);
        search.run();
    }
    Ok(search.extract(k))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Coverage(Box<[u64]>);

impl Coverage {
    fn new(n: usize) -> Self {
        Coverage(vec![0; n.div_ceil(64)].into_boxed_slice())
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn span_free(&self, (a, b): (usize, usize)) -> bool {
        (a..=b).all(|i| !self.get(i))
    }

    fn with_span(&self, (a, b): (usize, usize)) -> Self {
        let mut c = self.clone();
        for i in a..=b {
            c.0[i / 64] |= 1 << (i % 64);
        }
        c
    }
}

struct TransOption {
    span: (usize, usize),
    tgt: Vec<String>,
    tgt_ids: Vec<TokenId>,
    /// Translation-model scores plus phrase and word penalties.
    local: [f64; 6],
    reo_prev: [f64; 3],
    reo_next: [f64; 3],
    estimate: f64,
}

struct Arc {
    parent: usize,
    option: usize,
    delta: Vec<f64>,
}

struct Node {
    coverage: Coverage,
    covered: usize,
    last: Option<usize>,
    lm_state: Vec<TokenId>,
    features: Vec<f64>,
    score: f64,
    future: f64,
    best_arc: Option<usize>,
    arcs: Vec<Arc>,
}

#[derive(PartialEq, Eq, Hash)]
struct StateKey {
    coverage: Coverage,
    last_end: Option<usize>,
    /// Only kept when lexicalized reordering needs the last phrase pair.
    last_option: Option<usize>,
    lm_state: Vec<TokenId>,
}

struct Search<'a> {
    n: usize,
    models: &'a Models<'a>,
    weights: &'a FeatureWeights,
    config: DecoderConfig,
    options: Vec<TransOption>,
    /// Options grouped by start position.
    by_start: Vec<Vec<usize>>,
    future: Vec<Vec<f64>>,
    nodes: Vec<Node>,
    stacks: Vec<Vec<usize>>,
    finals: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(
        source: &Sentence,
        models: &'a Models<'a>,
        weights: &'a FeatureWeights,
        config: &DecoderConfig,
    ) -> Self {
        let n = source.len();
        let mut s = Search {
            n,
            models,
            weights,
            config: config.clone(),
            options: Vec::new(),
            by_start: vec![Vec::new(); n],
            future: Vec::new(),
            nodes: Vec::new(),
            stacks: vec![Vec::new(); n + 1],
            finals: Vec::new(),
        };
        s.collect_options(source.tokens());
        s.future = s.future_costs();
        s
    }

    fn lm_estimate(&self, ids: &[TokenId]) -> f64 {
        let lm = self.models.lm;
        (0..ids.len()).map(|k| lm.cond_log10(&ids[..k], ids[k])).sum::<f64>() * LN_10
    }

    fn collect_options(&mut self, src: &[String]) {
        let table = self.models.table;
        let max_len = table.max_src_len().max(1);
        for i in 0..self.n {
            for j in i..self.n.min(i + max_len) {
                let phrase = &src[i..=j];
                let mut span_opts: Vec<TransOption> = Vec::new();
                if let Some(targets) = table.options(phrase) {
                    for (tgt, e) in targets {
                        let reo = self.models.reordering.and_then(|r| r.get(phrase, tgt));
                        let local = [
                            log_or_floor(e.p_t_given_s),
                            log_or_floor(e.p_s_given_t),
                            log_or_floor(e.lex_t_given_s),
                            log_or_floor(e.lex_s_given_t),
                            -1.0,
                            -(tgt.len() as f64),
                        ];
                        span_opts.push(self.make_option((i, j), tgt.clone(), local, reo.map(|r| (r.prev, r.next))));
                    }
                } else if i == j {
                    let local = [OOV_LOG_FLOOR, OOV_LOG_FLOOR, OOV_LOG_FLOOR, OOV_LOG_FLOOR, -1.0, -1.0];
                    span_opts.push(self.make_option((i, i), vec![src[i].clone()], local, None));
                }
                span_opts.sort_by(|a, b| b.estimate.total_cmp(&a.estimate).then_with(|| a.tgt.cmp(&b.tgt)));
                span_opts.truncate(self.config.max_options.max(1));
                for o in span_opts {
                    self.by_start[i].push(self.options.len());
                    self.options.push(o);
                }
            }
        }
    }

    fn make_option(
        &self,
        span: (usize, usize),
        tgt: Vec<String>,
        local: [f64; 6],
        reo: Option<([f64; 3], [f64; 3])>,
    ) -> TransOption {
        let tgt_ids: Vec<TokenId> = tgt.iter().map(|t| self.models.lm.token_id(t)).collect();
        let (reo_prev, reo_next) = match reo {
            Some((p, q)) => (p.map(log_or_floor), q.map(log_or_floor)),
            None => ([OOV_LOG_FLOOR; 3], [OOV_LOG_FLOOR; 3]),
        };
        let w = self.weights.values();
        let estimate = dot(&w[..6], &local) + w[index::LM] * self.lm_estimate(&tgt_ids);
        TransOption {
            span,
            tgt,
            tgt_ids,
            local,
            reo_prev,
            reo_next,
            estimate,
        }
    }

    /// `future[i][j]`: best estimated score for covering `i..=j`.
    fn future_costs(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut fc = vec![vec![f64::NEG_INFINITY; n]; n];
        for o in &self.options {
            let (i, j) = o.span;
            fc[i][j] = fc[i][j].max(o.estimate);
        }
        for len in 2..=n {
            for i in 0..=n - len {
                let j = i + len - 1;
                for k in i..j {
                    let v = fc[i][k] + fc[k + 1][j];
                    if v > fc[i][j] {
                        fc[i][j] = v;
                    }
                }
            }
        }
        fc
    }

    fn future_of(&self, cov: &Coverage) -> f64 {
        let mut total = 0.0;
        let mut run: Option<usize> = None;
        for i in 0..=self.n {
            let free = i < self.n && !cov.get(i);
            match (free, run) {
                (true, None) => run = Some(i),
                (false, Some(s)) => {
                    total += self.future[s][i - 1];
                    run = None;
                }
                _ => {}
            }
        }
        total
    }

    fn lr_enabled(&self) -> bool {
        self.config.use_lex_reordering
    }

    fn run(&mut self) {
        let nf = self.config.num_features();
        let root = Node {
            coverage: Coverage::new(self.n),
            covered: 0,
            last: None,
            lm_state: self.initial_lm_state(),
            features: vec![0.0; nf],
            score: 0.0,
            future: self.future_of(&Coverage::new(self.n)),
            best_arc: None,
            arcs: Vec::new(),
        };
        self.nodes.push(root);
        self.stacks[0].push(0);
        let mut maps: Vec<HashMap<StateKey, usize>> = (0..=self.n).map(|_| HashMap::new()).collect();

        for c in 0..self.n {
            self.prune(c);
            let stack = std::mem::take(&mut self.stacks[c]);
            for &h in &stack {
                self.expand(h, &mut maps);
            }
            self.stacks[c] = stack;
        }
        self.finals = self.stacks[self.n].clone();
    }

    fn initial_lm_state(&self) -> Vec<TokenId> {
        if self.models.lm.order() > 1 {
            vec![self.models.lm.bos_id()]
        } else {
            Vec::new()
        }
    }

    fn target_of(&self, mut node: usize) -> Vec<&str> {
        let mut parts: Vec<&[String]> = Vec::new();
        while let Some(a) = self.nodes[node].best_arc {
            let arc = &self.nodes[node].arcs[a];
            parts.push(&self.options[arc.option].tgt);
            node = arc.parent;
        }
        parts.iter().rev().flat_map(|p| p.iter().map(String::as_str)).collect()
    }

    fn prune(&mut self, c: usize) {
        let mut stack = std::mem::take(&mut self.stacks[c]);
        if stack.len() > 1 {
            let mut keyed: Vec<(f64, Vec<&str>, &Coverage, usize)> = stack
                .iter()
                .map(|&h| {
                    let node = &self.nodes[h];
                    (node.score + node.future, self.target_of(h), &node.coverage, h)
                })
                .collect();
            keyed.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| a.1.cmp(&b.1))
                    .then_with(|| a.2.cmp(b.2))
                    .then_with(|| a.3.cmp(&b.3))
            });
            keyed.truncate(self.config.beam_size);
            stack = keyed.into_iter().map(|k| k.3).collect();
        }
        self.stacks[c] = stack;
    }

    fn expand(&mut self, h: usize, maps: &mut [HashMap<StateKey, usize>]) {
        let prev_span = self.nodes[h].last.map(|o| self.options[o].span);
        let prev_end = prev_span.map_or(-1, |s| s.1 as isize);
        for start in 0..self.n {
            if self.nodes[h].coverage.get(start) {
                continue;
            }
            let d = distortion_cost(prev_end, start);
            if self.config.distortion_limit.is_some_and(|lim| d > lim) {
                continue;
            }
            for oi in 0..self.by_start[start].len() {
                let o = self.by_start[start][oi];
                let span = self.options[o].span;
                if !self.nodes[h].coverage.span_free(span) {
                    continue;
                }
                let (delta, lm_state) = self.expansion(h, o, d);
                let parent = &self.nodes[h];
                let features: Vec<f64> = parent.features.iter().zip(&delta).map(|(a, b)| a + b).collect();
                let score = self.weights.dot(&features);
                let coverage = parent.coverage.with_span(span);
                let covered = parent.covered + span.1 - span.0 + 1;
                let key = StateKey {
                    coverage: coverage.clone(),
                    last_end: Some(span.1),
                    last_option: self.lr_enabled().then_some(o),
                    lm_state: lm_state.clone(),
                };
                let arc = Arc {
                    parent: h,
                    option: o,
                    delta,
                };
                if let Some(&existing) = maps[covered].get(&key) {
                    let node = &mut self.nodes[existing];
                    node.arcs.push(arc);
                    if score > node.score {
                        node.score = score;
                        node.features = features;
                        node.best_arc = Some(node.arcs.len() - 1);
                    }
                } else {
                    let future = self.future_of(&coverage);
                    let id = self.nodes.len();
                    self.nodes.push(Node {
                        coverage,
                        covered,
                        last: Some(o),
                        lm_state,
                        features,
                        score,
                        future,
                        best_arc: Some(0),
                        arcs: vec![arc],
                    });
                    maps[covered].insert(key, id);
                    self.stacks[covered].push(id);
                }
            }
        }
    }

    fn expansion(&self, h: usize, o: usize, d: usize) -> (Vec<f64>, Vec<TokenId>) {
        let node = &self.nodes[h];
        let opt = &self.options[o];
        let lm = self.models.lm;
        let mut delta = vec![0.0; self.config.num_features()];
        delta[..6].copy_from_slice(&opt.local);
        let mut ctx = node.lm_state.clone();
        let mut lm_sum = 0.0;
        for &id in &opt.tgt_ids {
            lm_sum += lm.cond_log10(&ctx, id);
            ctx.push(id);
        }
        delta[index::LM] = lm_sum * LN_10;
        let keep = lm.order() - 1;
        if ctx.len() > keep {
            ctx.drain(..ctx.len() - keep);
        }
        delta[index::DISTORTION] = -(d as f64);
        if self.lr_enabled() {
            let prev = node.last.map(|p| &self.options[p]);
            let orient = decoding_orientation(prev.map(|p| p.span), opt.span);
            self.add_orientation(&mut delta, prev, Some(opt), orient);
        }
        (delta, ctx)
    }

    fn add_orientation(
        &self,
        delta: &mut [f64],
        prev: Option<&TransOption>,
        next: Option<&TransOption>,
        orient: Orientation,
    ) {
        let k = orient.index();
        if let Some(n) = next {
            delta[index::LR_PREV + k] += n.reo_prev[k];
        }
        if let Some(p) = prev {
            delta[index::LR_NEXT + k] += p.reo_next[k];
        }
    }

    /// Features added when a complete hypothesis is closed off.
    fn final_delta(&self, h: usize) -> Vec<f64> {
        let node = &self.nodes[h];
        let mut delta = vec![0.0; self.config.num_features()];
        delta[index::LM] = self.models.lm.cond_log10(&node.lm_state, self.models.lm.eos_id()) * LN_10;
        if self.lr_enabled() {
            if let Some(p) = node.last {
                let prev = &self.options[p];
                let orient = decoding_orientation(Some(prev.span), (self.n, self.n));
                self.add_orientation(&mut delta, Some(prev), None, orient);
            }
        }
        delta
    }

    /// Exact k-best distinct strings: paths are popped best-first, each
    /// prioritized by its suffix plus the Viterbi score of its prefix.
    fn extract(&self, k: usize) -> NBestList {
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        for &f in &self.finals {
            let suffix = self.final_delta(f);
            heap.push(Item {
                priority: self.priority(f, &suffix),
                seq,
                node: f,
                suffix,
                path: Vec::new(),
            });
            seq += 1;
        }
        let mut found: HashMap<String, Hypothesis> = HashMap::new();
        let mut top_scores: Vec<f64> = Vec::new();
        let mut pops = 0usize;
        while let Some(item) = heap.pop() {
            if found.len() >= k {
                let kth = top_scores[k - 1];
                if item.priority < kth - 1e-9 {
                    break;
                }
            }
            pops += 1;
            if pops > self.config.max_nbest_pops {
                warn!("n-best extraction stopped after {} paths", self.config.max_nbest_pops);
                break;
            }
            let node = &self.nodes[item.node];
            if node.arcs.is_empty() {
                let hyp = self.complete(&item.path);
                let key = hyp.target.to_string();
                let replace = found.get(&key).is_none_or(|old| hyp.score > old.score);
                if replace {
                    found.insert(key, hyp);
                    top_scores = found.values().map(|h| h.score).collect();
                    top_scores.sort_by(|a, b| b.total_cmp(a));
                }
                continue;
            }
            for (ai, arc) in node.arcs.iter().enumerate() {
                let suffix: Vec<f64> = arc.delta.iter().zip(&item.suffix).map(|(a, b)| a + b).collect();
                let mut path = item.path.clone();
                path.push((item.node, ai));
                heap.push(Item {
                    priority: self.priority(arc.parent, &suffix),
                    seq,
                    node: arc.parent,
                    suffix,
                    path,
                });
                seq += 1;
            }
        }
        let mut candidates: Vec<Hypothesis> = found.into_values().collect();
        candidates.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.target.tokens().cmp(b.target.tokens()))
        });
        candidates.truncate(k);
        NBestList { candidates }
    }

    fn priority(&self, node: usize, suffix: &[f64]) -> f64 {
        let f: Vec<f64> = self.nodes[node].features.iter().zip(suffix).map(|(a, b)| a + b).collect();
        self.weights.dot(&f)
    }

    /// Rebuilds a derivation from `(node, arc)` pairs listed end first.
    fn complete(&self, path: &[(usize, usize)]) -> Hypothesis {
        let mut features = vec![0.0; self.config.num_features()];
        let mut tokens = Vec::new();
        let mut phrases = Vec::new();
        for &(node, ai) in path.iter().rev() {
            let arc = &self.nodes[node].arcs[ai];
            for (f, d) in features.iter_mut().zip(&arc.delta) {
                *f += d;
            }
            let opt = &self.options[arc.option];
            tokens.extend(opt.tgt.iter().cloned());
            phrases.push(AppliedPhrase {
                src_span: opt.span,
                tgt: opt.tgt.clone(),
            });
        }
        let last = path.first().map_or(0, |&(node, _)| node);
        for (f, d) in features.iter_mut().zip(self.final_delta(last)) {
            *f += d;
        }
        let score = self.weights.dot(&features);
        Hypothesis {
            target: Sentence::new(tokens).expect("tokens come from the phrase table or the source"),
            features,
            score,
            phrases,
        }
    }
}

struct Item {
    priority: f64,
    seq: usize,
    node: usize,
    suffix: Vec<f64>,
    path: Vec<(usize, usize)>,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
