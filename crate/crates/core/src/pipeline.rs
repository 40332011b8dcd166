//! End-to-end training and evaluation flows shared by the command-line
//! tool and the tests: train, tune and evaluate a direct system and the
//! three pivot strategies, then combine the pivot outputs with MBR.

use std::fmt;
use std::str::FromStr;

use log::info;

use crate::align::align_corpus;
use crate::corpus::{filter_corpus, select_dev_test, CorpusSplit, ParallelCorpus, Sentence};
use crate::decoder::{tune_weights, DecoderConfig, FeatureWeights, RoundTrace};
use crate::error::{Error, Result};
use crate::eval::{bleu_corpus, mbr_combine, BleuReport};
use crate::lm::NGramModel;
use crate::pivot::{build_pseudo_corpus, cascade_translate, triangulate, TranslationSystem};
use crate::tm::{build_phrase_table, estimate_lex_reordering, DEFAULT_MAX_PHRASE_LEN};

/// Settings for building one phrase-based system.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub align_iterations: usize,
    pub max_phrase_len: usize,
    pub lm_order: usize,
    pub lex_reordering: bool,
    pub decoder: DecoderConfig,
    pub tune_rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            align_iterations: 5,
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            lm_order: 5,
            lex_reordering: true,
            decoder: DecoderConfig::default(),
            tune_rounds: 5,
        }
    }
}

/// Sizes of the trained components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSummary {
    pub sentence_pairs: usize,
    pub phrase_pairs: usize,
    pub reordering_entries: usize,
    pub lm_ngrams: Vec<usize>,
}

impl fmt::Display for TrainingSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sentence pairs {}, phrase pairs {}, reordering entries {}, lm n-grams {:?}",
            self.sentence_pairs, self.phrase_pairs, self.reordering_entries, self.lm_ngrams
        )
    }
}

/// Aligns, extracts and scores phrases, estimates reordering and trains
/// the language model. Weights start at the tuning initial point.
pub fn train_system(
    bitext: &[(Sentence, Sentence)],
    lm_corpus: &[Sentence],
    cfg: &TrainConfig,
) -> Result<(TranslationSystem, TrainingSummary)> {
    let aligned = align_corpus(bitext, cfg.align_iterations)?;
    let table = build_phrase_table(
        bitext,
        &aligned.alignments,
        &aligned.lex_s_given_t,
        &aligned.lex_t_given_s,
        cfg.max_phrase_len,
    )?;
    let reordering = if cfg.lex_reordering {
        Some(estimate_lex_reordering(bitext, &aligned.alignments, cfg.max_phrase_len)?)
    } else {
        None
    };
    let lm = NGramModel::train(lm_corpus, cfg.lm_order)?;
    let summary = TrainingSummary {
        sentence_pairs: bitext.len(),
        phrase_pairs: table.len(),
        reordering_entries: reordering.as_ref().map_or(0, |r| r.len()),
        lm_ngrams: lm.counts(),
    };
    let decoder = DecoderConfig {
        use_lex_reordering: cfg.lex_reordering,
        ..cfg.decoder.clone()
    };
    let system = TranslationSystem {
        table,
        reordering,
        lm,
        weights: FeatureWeights::initial(cfg.lex_reordering),
        config: decoder,
    };
    Ok((system, summary))
}

/// Tunes `system` in place on a development set.
pub fn tune_system(
    system: &mut TranslationSystem,
    dev_src: &[Sentence],
    dev_ref: &[Sentence],
    rounds: usize,
) -> Result<Vec<RoundTrace>> {
    let result = tune_weights(
        dev_src,
        dev_ref,
        &system.models(),
        &system.config,
        rounds,
        system.weights.clone(),
    )?;
    system.weights = result.weights;
    Ok(result.trace)
}

/// Full experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub src_lang: String,
    pub piv_lang: String,
    pub tgt_lang: String,
    pub max_len: usize,
    pub max_ratio: f64,
    pub dev_size: usize,
    pub test_size: usize,
    pub pool_factor: usize,
    pub train: TrainConfig,
    pub triangulation_top_k: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            src_lang: "src".into(),
            piv_lang: "piv".into(),
            tgt_lang: "tgt".into(),
            max_len: 100,
            max_ratio: 3.0,
            dev_size: 100,
            test_size: 200,
            pool_factor: 2,
            train: TrainConfig::default(),
            triangulation_top_k: None,
        }
    }
}

/// Filters the corpus and holds out dev and test rows chosen with a
/// source-language model trained on the filtered corpus.
pub fn prepare_split(corpus: &ParallelCorpus, cfg: &ExperimentConfig) -> Result<CorpusSplit> {
    let filtered = filter_corpus(corpus, cfg.max_len, cfg.max_ratio, &cfg.piv_lang)?;
    info!("filter kept {} of {} rows", filtered.len(), corpus.len());
    let column = filtered.column(&cfg.src_lang)?;
    let lm = NGramModel::train(&column, cfg.train.lm_order)?;
    Ok(select_dev_test(
        &filtered,
        &lm,
        &cfg.src_lang,
        cfg.dev_size,
        cfg.test_size,
        cfg.pool_factor,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PivotStrategy {
    Cascade,
    Pseudo,
    Triangulation,
}

impl PivotStrategy {
    pub const ALL: [PivotStrategy; 3] = [
        PivotStrategy::Cascade,
        PivotStrategy::Pseudo,
        PivotStrategy::Triangulation,
    ];
}

impl fmt::Display for PivotStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PivotStrategy::Cascade => "cascade",
            PivotStrategy::Pseudo => "pseudo",
            PivotStrategy::Triangulation => "triangulation",
        })
    }
}

impl FromStr for PivotStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cascade" => Ok(PivotStrategy::Cascade),
            "pseudo" => Ok(PivotStrategy::Pseudo),
            "triangulation" => Ok(PivotStrategy::Triangulation),
            other => Err(Error::Config(format!(
                "unknown pivot strategy {other:?} (expected cascade, pseudo or triangulation)"
            ))),
        }
    }
}

/// Outcome of one system on the test set. `systems` holds the tuned
/// components, named for saving.
#[derive(Debug, Clone)]
pub struct SystemRun {
    pub name: String,
    pub output: Vec<Sentence>,
    pub bleu: BleuReport,
    pub tuning: Vec<(String, Vec<RoundTrace>)>,
    pub training: Vec<(String, TrainingSummary)>,
    pub systems: Vec<(String, TranslationSystem)>,
    /// Pseudo-corpus rows whose pivot side translated to nothing.
    pub empty_pseudo_rows: Vec<usize>,
}

fn columns(c: &ParallelCorpus, a: &str, b: &str) -> Result<(Vec<Sentence>, Vec<Sentence>)> {
    Ok((c.column(a)?, c.column(b)?))
}

fn translate(system: &TranslationSystem, sources: &[Sentence]) -> Result<Vec<Sentence>> {
    system
        .translate_all(sources)
        .map_err(|(_, e)| Error::Decode(e))
}

/// Trains, tunes and evaluates a system between two languages of the split.
fn train_pair(split: &CorpusSplit, cfg: &ExperimentConfig, src: &str, tgt: &str, name: &str) -> Result<SystemRun> {
    let bitext = split.train.pairs(src, tgt)?;
    let lm_corpus = split.train.column(tgt)?;
    let (mut system, summary) = train_system(&bitext, &lm_corpus, &cfg.train)?;
    info!("{name}: {summary}");
    let (dev_src, dev_ref) = columns(&split.dev, src, tgt)?;
    let trace = tune_system(&mut system, &dev_src, &dev_ref, cfg.train.tune_rounds)?;
    let (test_src, test_ref) = columns(&split.test, src, tgt)?;
    let output = translate(&system, &test_src)?;
    let bleu = bleu_corpus(&output, &test_ref)?;
    Ok(SystemRun {
        name: name.to_owned(),
        output,
        bleu,
        tuning: vec![(name.to_owned(), trace)],
        training: vec![(name.to_owned(), summary)],
        systems: vec![(name.to_owned(), system)],
        empty_pseudo_rows: Vec::new(),
    })
}

pub fn run_direct(split: &CorpusSplit, cfg: &ExperimentConfig) -> Result<SystemRun> {
    train_pair(split, cfg, &cfg.src_lang, &cfg.tgt_lang, "direct")
}

/// The tuned source→pivot and pivot→target systems every strategy draws on.
#[derive(Debug, Clone)]
pub struct PivotSystems {
    pub sp: SystemRun,
    pub pt: SystemRun,
}

pub fn train_pivot_systems(split: &CorpusSplit, cfg: &ExperimentConfig) -> Result<PivotSystems> {
    Ok(PivotSystems {
        sp: train_pair(split, cfg, &cfg.src_lang, &cfg.piv_lang, "src-piv")?,
        pt: train_pair(split, cfg, &cfg.piv_lang, &cfg.tgt_lang, "piv-tgt")?,
    })
}

fn system_of(run: &SystemRun) -> &TranslationSystem {
    &run.systems[0].1
}

pub fn run_pivot(
    split: &CorpusSplit,
    cfg: &ExperimentConfig,
    strategy: PivotStrategy,
    pivots: &PivotSystems,
) -> Result<SystemRun> {
    let (sp, pt) = (system_of(&pivots.sp), system_of(&pivots.pt));
    let (test_src, test_ref) = columns(&split.test, &cfg.src_lang, &cfg.tgt_lang)?;
    let (dev_src, dev_ref) = columns(&split.dev, &cfg.src_lang, &cfg.tgt_lang)?;
    let name = strategy.to_string();
    let mut tuning = Vec::new();
    let mut training = Vec::new();
    let mut systems = Vec::new();
    let mut empty_pseudo_rows = Vec::new();
    let output = match strategy {
        PivotStrategy::Cascade => cascade_translate(&test_src, sp, pt)?,
        PivotStrategy::Pseudo => {
            let sp_train = split.train.project(&[&cfg.src_lang, &cfg.piv_lang])?;
            let pseudo = build_pseudo_corpus(&sp_train, pt, &cfg.tgt_lang)?;
            empty_pseudo_rows = pseudo.empty_rows.clone();
            let bitext: Vec<(Sentence, Sentence)> = pseudo
                .corpus
                .rows()
                .iter()
                .filter(|r| !r[0].is_empty() && !r[1].is_empty())
                .map(|r| (r[0].clone(), r[1].clone()))
                .collect();
            let lm_corpus = split.train.column(&cfg.tgt_lang)?;
            let (mut system, summary) = train_system(&bitext, &lm_corpus, &cfg.train)?;
            info!("pseudo: {summary}");
            tuning.push((name.clone(), tune_system(&mut system, &dev_src, &dev_ref, cfg.train.tune_rounds)?));
            training.push((name.clone(), summary));
            let out = translate(&system, &test_src)?;
            systems.push((name.clone(), system));
            out
        }
        PivotStrategy::Triangulation => {
            let table = triangulate(&sp.table, &pt.table, cfg.triangulation_top_k);
            let summary = TrainingSummary {
                sentence_pairs: 0,
                phrase_pairs: table.len(),
                reordering_entries: 0,
                lm_ngrams: pt.lm.counts(),
            };
            info!("triangulation: {summary}");
            let mut system = TranslationSystem {
                table,
                reordering: None,
                lm: pt.lm.clone(),
                weights: FeatureWeights::initial(false),
                config: DecoderConfig {
                    use_lex_reordering: false,
                    ..cfg.train.decoder.clone()
                },
            };
            tuning.push((name.clone(), tune_system(&mut system, &dev_src, &dev_ref, cfg.train.tune_rounds)?));
            training.push((name.clone(), summary));
            let out = translate(&system, &test_src)?;
            systems.push((name.clone(), system));
            out
        }
    };
    let bleu = bleu_corpus(&output, &test_ref)?;
    Ok(SystemRun {
        name,
        output,
        bleu,
        tuning,
        training,
        systems,
        empty_pseudo_rows,
    })
}

/// MBR selection over the outputs of at least three systems.
pub fn run_mbr(runs: &[&SystemRun], refs: &[Sentence]) -> Result<(Vec<Sentence>, BleuReport)> {
    let n = refs.len();
    if let Some(bad) = runs.iter().find(|r| r.output.len() != n) {
        return Err(Error::Config(format!(
            "system {} produced {} outputs for {} references",
            bad.name,
            bad.output.len(),
            n
        )));
    }
    let lists: Vec<Vec<Sentence>> = (0..n)
        .map(|i| runs.iter().map(|r| r.output[i].clone()).collect())
        .collect();
    let combined = mbr_combine(&lists, None)?;
    let bleu = bleu_corpus(&combined, refs)?;
    Ok((combined, bleu))
}

/// Direct system, all pivot strategies and their MBR combination.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub split_sizes: (usize, usize, usize),
    pub direct: SystemRun,
    pub pivots: PivotSystems,
    pub strategies: Vec<SystemRun>,
    pub mbr_output: Vec<Sentence>,
    pub mbr_bleu: BleuReport,
}

pub fn run_experiment(corpus: &ParallelCorpus, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let split = prepare_split(corpus, cfg)?;
    let direct = run_direct(&split, cfg)?;
    let pivots = train_pivot_systems(&split, cfg)?;
    let strategies = PivotStrategy::ALL
        .iter()
        .map(|&s| run_pivot(&split, cfg, s, &pivots))
        .collect::<Result<Vec<_>>>()?;
    let refs = split.test.column(&cfg.tgt_lang)?;
    let (mbr_output, mbr_bleu) = run_mbr(&strategies.iter().collect::<Vec<_>>(), &refs)?;
    Ok(ExperimentResult {
        split_sizes: (split.train.len(), split.dev.len(), split.test.len()),
        direct,
        pivots,
        strategies,
        mbr_output,
        mbr_bleu,
    })
}
