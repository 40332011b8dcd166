//! Pivot-language strategies: cascaded decoding, pseudo-corpus synthesis
//! and phrase-table triangulation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{ParallelCorpus, Sentence};
use crate::decoder::{self, DecodeError, DecoderConfig, FeatureWeights, Hypothesis, Models, NBestList};
use crate::io::{read_utf8, write_atomic};
use crate::lm::{LmError, NGramModel};
use crate::tm::{Phrase, PhraseTable, PhraseTableEntry, ReorderingTable, TmError};

pub const PHRASE_TABLE_FILE: &str = "phrase-table.txt";
pub const REORDERING_FILE: &str = "reordering-table.txt";
pub const LM_FILE: &str = "lm.arpa";
pub const WEIGHTS_FILE: &str = "weights.txt";
pub const DECODER_CONFIG_FILE: &str = "decoder.cfg";

/// Which half of a pivot chain failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SourcePivot,
    PivotTarget,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::SourcePivot => "sp",
            Stage::PivotTarget => "pt",
        })
    }
}

#[derive(Debug, Error)]
pub enum PivotError {
    #[error("{stage} stage, sentence {sentence}: {source}")]
    Stage {
        stage: Stage,
        sentence: usize,
        #[source]
        source: DecodeError,
    },
    #[error("expected a two-language corpus, found {0} languages")]
    Languages(usize),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Tm(#[from] TmError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A trained, tuned phrase-based system.
#[derive(Debug, Clone)]
pub struct TranslationSystem {
    pub table: PhraseTable,
    pub reordering: Option<ReorderingTable>,
    pub lm: NGramModel,
    pub weights: FeatureWeights,
    pub config: DecoderConfig,
}

impl TranslationSystem {
    pub fn models(&self) -> Models<'_> {
        Models {
            table: &self.table,
            reordering: self.reordering.as_ref(),
            lm: &self.lm,
        }
    }

    pub fn translate(&self, source: &Sentence) -> Result<Hypothesis, DecodeError> {
        decoder::decode(source, &self.models(), &self.weights, &self.config)
    }

    pub fn nbest(&self, source: &Sentence) -> Result<NBestList, DecodeError> {
        decoder::nbest(source, &self.models(), &self.weights, &self.config)
    }

    /// 1-best outputs in input order. The error carries the failing
    /// sentence index.
    pub fn translate_all(&self, sources: &[Sentence]) -> Result<Vec<Sentence>, (usize, DecodeError)> {
        sources
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.translate(s).map(|h| h.target).map_err(|e| (i, e)))
            .collect()
    }

    /// Copies its input: one-word identity phrases over `vocab`, a uniform
    /// language model and monotone decoding.
    pub fn identity<'a>(vocab: impl IntoIterator<Item = &'a str>) -> Self {
        let vocab: Vec<&str> = vocab.into_iter().collect();
        let mut table = PhraseTable::new();
        for &w in &vocab {
            table.insert(vec![w.to_owned()], vec![w.to_owned()], PhraseTableEntry {
                p_s_given_t: 1.0,
                lex_s_given_t: 1.0,
                p_t_given_s: 1.0,
                lex_t_given_s: 1.0,
                count: 1,
                src_count: 1,
                tgt_count: 1,
            });
        }
        TranslationSystem {
            table,
            reordering: None,
            lm: NGramModel::uniform(vocab.iter().copied()),
            weights: FeatureWeights::initial(false),
            config: DecoderConfig {
                beam_size: 10,
                distortion_limit: Some(0),
                nbest_size: 1,
                use_lex_reordering: false,
                ..DecoderConfig::default()
            },
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), PivotError> {
        std::fs::create_dir_all(dir).map_err(|source| PivotError::Io {
            path: dir.to_owned(),
            source,
        })?;
        self.table.write(&dir.join(PHRASE_TABLE_FILE))?;
        let reo_path = dir.join(REORDERING_FILE);
        match &self.reordering {
            Some(r) => r.write(&reo_path)?,
            // a stale table would be picked up by `load`
            None if reo_path.exists() => std::fs::remove_file(&reo_path).map_err(|source| PivotError::Io {
                path: reo_path.clone(),
                source,
            })?,
            None => {}
        }
        self.lm.write_arpa(&dir.join(LM_FILE))?;
        self.weights.write(&dir.join(WEIGHTS_FILE))?;
        let cfg = dir.join(DECODER_CONFIG_FILE);
        write_atomic(&cfg, &self.config.to_text()).map_err(|source| PivotError::Io { path: cfg, source })
    }

    pub fn load(dir: &Path) -> Result<Self, PivotError> {
        let table = PhraseTable::read(&dir.join(PHRASE_TABLE_FILE))?;
        let reo_path = dir.join(REORDERING_FILE);
        let reordering = if reo_path.exists() {
            Some(ReorderingTable::read(&reo_path)?)
        } else {
            None
        };
        let lm = NGramModel::read_arpa(&dir.join(LM_FILE))?;
        let weights = FeatureWeights::read(&dir.join(WEIGHTS_FILE))?;
        let cfg_path = dir.join(DECODER_CONFIG_FILE);
        let text = read_utf8(&cfg_path).map_err(|source| PivotError::Io { path: cfg_path, source })?;
        let config = DecoderConfig::from_text(&text)?;
        if weights.len() != config.num_features() {
            return Err(DecodeError::WeightLength {
                expected: config.num_features(),
                found: weights.len(),
            }
            .into());
        }
        Ok(TranslationSystem {
            table,
            reordering,
            lm,
            weights,
            config,
        })
    }
}

/// Source → pivot → target by chaining 1-best outputs.
pub fn cascade_translate(
    sources: &[Sentence],
    sys_sp: &TranslationSystem,
    sys_pt: &TranslationSystem,
) -> Result<Vec<Sentence>, PivotError> {
    let stage = |stage| move |(sentence, source)| PivotError::Stage { stage, sentence, source };
    let pivot = sys_sp.translate_all(sources).map_err(stage(Stage::SourcePivot))?;
    sys_pt.translate_all(&pivot).map_err(stage(Stage::PivotTarget))
}

/// Synthetic source–target corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCorpus {
    pub corpus: ParallelCorpus,
    /// Rows whose pivot side translated to nothing. They are kept.
    pub empty_rows: Vec<usize>,
}

/// Translates the pivot column (second language) of `bitext_sp` into
/// `target_lang`, keeping the source column untouched.
pub fn build_pseudo_corpus(
    bitext_sp: &ParallelCorpus,
    sys_pt: &TranslationSystem,
    target_lang: &str,
) -> Result<PseudoCorpus, PivotError> {
    if bitext_sp.languages().len() != 2 {
        return Err(PivotError::Languages(bitext_sp.languages().len()));
    }
    let pivots: Vec<Sentence> = bitext_sp.rows().iter().map(|r| r[1].clone()).collect();
    let targets = sys_pt.translate_all(&pivots).map_err(|(sentence, source)| PivotError::Stage {
        stage: Stage::PivotTarget,
        sentence,
        source,
    })?;
    let empty_rows: Vec<usize> = targets
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_empty())
        .map(|(i, _)| i)
        .collect();
    if !empty_rows.is_empty() {
        warn!("{} pseudo-corpus rows have an empty translation", empty_rows.len());
    }
    let src_lang = bitext_sp.languages()[0].as_str();
    let corpus = ParallelCorpus::bitext(
        src_lang,
        target_lang,
        bitext_sp.rows().iter().map(|r| r[0].clone()).zip(targets),
    );
    Ok(PseudoCorpus { corpus, empty_rows })
}

#[derive(Default)]
struct Acc {
    p_t_given_s: f64,
    p_s_given_t: f64,
    lex_t_given_s: f64,
    lex_s_given_t: f64,
    count: u64,
}

/// Joins a source→pivot and a pivot→target table on shared pivot phrases,
/// marginalizing both conditionals and both lexical weights over the
/// pivot. `prune_top_k` keeps only the k most likely pivots per source
/// phrase.
pub fn triangulate(
    table_sp: &PhraseTable,
    table_pt: &PhraseTable,
    prune_top_k: Option<usize>,
) -> PhraseTable {
    let sources: Vec<(&Phrase, &BTreeMap<Phrase, PhraseTableEntry>)> = table_sp.sources().collect();
    let joined: Vec<(Phrase, BTreeMap<Phrase, Acc>)> = sources
        .par_iter()
        .map(|&(s, pivots)| {
            let mut chosen: Vec<(&Phrase, &PhraseTableEntry)> = pivots.iter().collect();
            if let Some(k) = prune_top_k {
                chosen.sort_by(|a, b| b.1.p_t_given_s.total_cmp(&a.1.p_t_given_s).then_with(|| a.0.cmp(b.0)));
                chosen.truncate(k);
                chosen.sort_by(|a, b| a.0.cmp(b.0));
            }
            let mut acc: BTreeMap<Phrase, Acc> = BTreeMap::new();
            for (p, sp) in chosen {
                let Some(targets) = table_pt.options(p) else { continue };
                for (t, pt) in targets {
                    let a = acc.entry(t.clone()).or_default();
                    a.p_t_given_s += pt.p_t_given_s * sp.p_t_given_s;
                    a.p_s_given_t += sp.p_s_given_t * pt.p_s_given_t;
                    a.lex_t_given_s += pt.lex_t_given_s * sp.lex_t_given_s;
                    a.lex_s_given_t += sp.lex_s_given_t * pt.lex_s_given_t;
                    a.count += sp.count.min(pt.count);
                }
            }
            (s.clone(), acc)
        })
        .collect();

    let mut tgt_counts: BTreeMap<&Phrase, u64> = BTreeMap::new();
    for (_, acc) in &joined {
        for (t, a) in acc {
            *tgt_counts.entry(t).or_default() += a.count;
        }
    }
    let mut out = PhraseTable::new();
    for (s, acc) in &joined {
        let src_count: u64 = acc.values().map(|a| a.count).sum();
        for (t, a) in acc {
            out.insert(s.clone(), t.clone(), PhraseTableEntry {
                p_s_given_t: a.p_s_given_t,
                lex_s_given_t: a.lex_s_given_t,
                p_t_given_s: a.p_t_given_s,
                lex_t_given_s: a.lex_t_given_s,
                count: a.count,
                src_count,
                tgt_count: tgt_counts[t],
            });
        }
    }
    if out.is_empty() {
        warn!("triangulation produced an empty table: no shared pivot phrases");
    }
    out
}
