use std::fmt::Display;
use std::path::{Path, PathBuf};

use log::info;
use pivotsmt::align::{align_corpus, read_alignments, write_alignments, Lexicon};
use pivotsmt::corpus::{language_path, read_corpus, read_sentences, write_corpus, write_sentences, Profile};
use pivotsmt::decoder::{write_nbest, FeatureWeights};
use pivotsmt::eval::{bleu_corpus, bootstrap_significance, mbr_combine, rquantity, Winner, MIN_MBR_CANDIDATES};
use pivotsmt::lm::NGramModel;
use pivotsmt::pipeline::{
    prepare_split, run_direct, run_mbr, run_pivot, train_pivot_systems, PivotStrategy, SystemRun,
};
use pivotsmt::pivot::{build_pseudo_corpus, cascade_translate, triangulate, TranslationSystem, LM_FILE};
use pivotsmt::tm::{build_phrase_table, estimate_lex_reordering, PhraseTable};
use pivotsmt::{ParallelCorpus, Sentence};

use crate::config::PipelineConfig;
use crate::report::Report;
use crate::{CliError, Command};

fn core<E: Into<pivotsmt::Error>>(e: E) -> CliError {
    e.into().into()
}

fn data(context: impl Display, e: impl Display) -> CliError {
    CliError::Data(format!("{context}: {e}"))
}

/// Files produced by earlier steps are already tokenized.
fn read_tokens(path: &Path) -> Result<Vec<Sentence>, CliError> {
    read_sentences(path, Profile::Pretokenized).map_err(core)
}

fn write_tokens(path: &Path, sentences: &[Sentence]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data(dir.display(), e))?;
    }
    write_sentences(path, sentences).map_err(core)
}

fn read_bitext(src: &Path, tgt: &Path) -> Result<Vec<(Sentence, Sentence)>, CliError> {
    let (s, t) = (read_tokens(src)?, read_tokens(tgt)?);
    if s.len() != t.len() {
        return Err(CliError::Data(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    Ok(s.into_iter().zip(t).collect())
}

fn same_length(what: &str, a: usize, b: usize) -> Result<(), CliError> {
    if a != b {
        return Err(CliError::Data(format!("{what}: {a} vs {b} lines")));
    }
    Ok(())
}

fn lexicon_path(align: &Path, direction: &str) -> PathBuf {
    language_path(align, direction)
}

fn load_system(dir: &Path, cfg: &PipelineConfig) -> Result<TranslationSystem, CliError> {
    let mut sys = TranslationSystem::load(dir).map_err(core)?;
    sys.config = cfg.decoder_overrides(&sys.config);
    Ok(sys)
}

fn languages(cfg: &PipelineConfig) -> Vec<String> {
    ["src_lang", "piv_lang", "tgt_lang"]
        .iter()
        .filter(|k| cfg.is_set(k))
        .filter_map(|k| cfg.get(k).map(str::to_owned))
        .collect()
}

pub fn dispatch(command: &Command, cfg: &PipelineConfig) -> Result<(), CliError> {
    let name = command.name();
    match command {
        Command::Prepare { out } => prepare(cfg, out),
        Command::BuildLm { text, out } => {
            let corpus = read_tokens(text)?;
            let lm = NGramModel::train(&corpus, cfg.count("order")).map_err(core)?;
            lm.write_arpa(out).map_err(core)?;
            let mut r = Report::new(name, cfg);
            r.input("text", text).output("lm", out);
            r.metric("ngram_counts", format!("{:?}", lm.counts()))
                .metric("training_perplexity", lm.perplexity(&corpus));
            r.write_beside(out)?;
            Ok(())
        }
        Command::Align { src, tgt, out } => {
            let bitext = read_bitext(src, tgt)?;
            let aligned = align_corpus(&bitext, cfg.count("align_iterations")).map_err(core)?;
            write_alignments(out, &aligned.alignments).map_err(core)?;
            aligned.lex_s_given_t.write(&lexicon_path(out, "lex_s_given_t")).map_err(core)?;
            aligned.lex_t_given_s.write(&lexicon_path(out, "lex_t_given_s")).map_err(core)?;
            let links: usize = aligned.alignments.iter().map(|a| a.links().len()).sum();
            let mut r = Report::new(name, cfg);
            r.input("src", src).input("tgt", tgt).output("alignment", out);
            r.metric("sentence_pairs", bitext.len()).metric("links", links);
            r.write_beside(out)?;
            Ok(())
        }
        Command::BuildTm { src, tgt, align, lm, out } => build_tm(cfg, src, tgt, align, lm.as_deref(), out),
        Command::Tune { system, src, reference, out } => {
            let mut sys = load_system(system, cfg)?;
            let (dev_src, dev_ref) = (read_tokens(src)?, read_tokens(reference)?);
            same_length("dev source vs reference", dev_src.len(), dev_ref.len())?;
            let trace = pivotsmt::pipeline::tune_system(&mut sys, &dev_src, &dev_ref, cfg.count("tune_rounds"))
                .map_err(CliError::from)?;
            sys.save(out).map_err(core)?;
            let mut r = Report::new(name, cfg);
            r.input("system", system).input("src", src).input("ref", reference).output("system", out);
            for (i, t) in trace.iter().enumerate() {
                r.metric(
                    &format!("round_{}", i + 1),
                    format!("pool {} bleu {:.6} -> {:.6}", t.pool_size, t.pool_bleu_before, t.pool_bleu_after),
                );
            }
            r.metric("weights", sys.weights.to_text().trim_end().replace('\n', ", "));
            r.write_to(out)?;
            Ok(())
        }
        Command::Translate { system, input, out, nbest } => {
            let sys = load_system(system, cfg)?;
            let sources = read_tokens(input)?;
            let outputs = sys.translate_all(&sources).map_err(|(i, e)| data(format!("sentence {}", i + 1), e))?;
            write_tokens(out, &outputs)?;
            if let Some(path) = nbest {
                let mut text = String::new();
                for (i, s) in sources.iter().enumerate() {
                    let list = sys.nbest(s).map_err(|e| data(format!("sentence {}", i + 1), e))?;
                    text.push_str(&write_nbest(i, &list));
                }
                pivotsmt::io::write_atomic(path, &text).map_err(|e| data(path.display(), e))?;
            }
            Ok(())
        }
        Command::Triangulate { sp, pt, out } => {
            let a = PhraseTable::read(sp).map_err(core)?;
            let b = PhraseTable::read(pt).map_err(core)?;
            let table = triangulate(&a, &b, cfg.opt_count("top_k"));
            table.write(out).map_err(core)?;
            let mut r = Report::new(name, cfg);
            r.input("sp", sp).input("pt", pt).output("table", out);
            r.metric("sp_entries", a.len())
                .metric("pt_entries", b.len())
                .metric("entries", table.len());
            r.write_beside(out)?;
            Ok(())
        }
        Command::Cascade { sp_sys, pt_sys, input, out } => {
            let sp = load_system(sp_sys, cfg)?;
            let pt = load_system(pt_sys, cfg)?;
            let outputs = cascade_translate(&read_tokens(input)?, &sp, &pt).map_err(core)?;
            write_tokens(out, &outputs)
        }
        Command::Pseudo { sp_corpus, pt_sys, out } => {
            let src = cfg.required("src_lang", name)?.to_owned();
            let piv = cfg.required("piv_lang", name)?.to_owned();
            let tgt = cfg.required("tgt_lang", name)?.to_owned();
            let bitext = read_corpus(sp_corpus, &[src.clone(), piv.clone()], Profile::Pretokenized).map_err(core)?;
            let pt = load_system(pt_sys, cfg)?;
            let pseudo = build_pseudo_corpus(&bitext, &pt, &tgt).map_err(core)?;
            write_corpus(out, &pseudo.corpus).map_err(core)?;
            let mut r = Report::new(name, cfg);
            r.input("sp_corpus", sp_corpus).input("pt_system", pt_sys).output("prefix", out);
            r.metric("rows", pseudo.corpus.len())
                .metric("empty_rows", pseudo.empty_rows.len())
                .metric("empty_row_numbers", format!("{:?}", pseudo.empty_rows.iter().map(|i| i + 1).collect::<Vec<_>>()));
            r.write_beside(out)?;
            Ok(())
        }
        Command::Mbr { lists, out } => {
            if lists.len() < MIN_MBR_CANDIDATES {
                return Err(CliError::Usage(format!(
                    "MBR needs at least {MIN_MBR_CANDIDATES} hypotheses per sentence, got {} lists",
                    lists.len()
                )));
            }
            let outputs: Vec<Vec<Sentence>> = lists.iter().map(|p| read_tokens(p)).collect::<Result<_, _>>()?;
            for (p, o) in lists.iter().zip(&outputs).skip(1) {
                same_length(&format!("{} vs {}", lists[0].display(), p.display()), outputs[0].len(), o.len())?;
            }
            let per_sentence: Vec<Vec<Sentence>> = (0..outputs[0].len())
                .map(|i| outputs.iter().map(|o| o[i].clone()).collect())
                .collect();
            let combined = mbr_combine(&per_sentence, None).map_err(core)?;
            write_tokens(out, &combined)?;
            let mut r = Report::new(name, cfg);
            for p in lists {
                r.input("list", p);
            }
            r.output("combined", out).metric("sentences", combined.len());
            r.write_beside(out)?;
            Ok(())
        }
        Command::Evaluate { hyp, reference, report } => {
            let (h, rf) = (read_tokens(hyp)?, read_tokens(reference)?);
            let b = bleu_corpus(&h, &rf).map_err(core)?;
            println!("{b}");
            println!("{}", b.machine_line());
            let mut r = Report::new(name, cfg);
            r.input("hyp", hyp).input("ref", reference).metric("bleu", b.machine_line());
            r.write_eval(report.as_deref(), hyp)?;
            Ok(())
        }
        Command::Significance { a, b, reference, report } => {
            let (ha, hb, rf) = (read_tokens(a)?, read_tokens(b)?, read_tokens(reference)?);
            let v = bootstrap_significance(&ha, &hb, &rf, cfg.count("samples"), cfg.float("level"), cfg.seed())
                .map_err(core)?;
            let winner = match v.confident_winner {
                Some(Winner::A) => "A",
                Some(Winner::B) => "B",
                None => "none",
            };
            let line = format!("wins_a={} wins_b={} ties={} winner={winner}", v.wins_a, v.wins_b, v.ties);
            println!("{line}");
            let mut r = Report::new(name, cfg);
            r.input("a", a).input("b", b).input("ref", reference).metric("verdict", line);
            r.write_eval(report.as_deref(), a)?;
            Ok(())
        }
        Command::Rquantity { src, tgt, align, report } => {
            let bitext = read_bitext(src, tgt)?;
            let aligns = read_alignments(align, &bitext).map_err(core)?;
            let rq = rquantity(&bitext, &aligns).map_err(core)?;
            println!("RQuantity={:.6}", rq.average);
            let reorderings: usize = rq.sentences.iter().map(|s| s.reorderings.len()).sum();
            let mut r = Report::new(name, cfg);
            r.input("src", src).input("tgt", tgt).input("align", align);
            r.metric("rquantity", rq.average).metric("reorderings", reorderings);
            r.write_eval(report.as_deref(), align)?;
            Ok(())
        }
        Command::PipelineDirect => pipeline_direct(cfg),
        Command::PipelinePivot => pipeline_pivot(cfg),
        Command::Synth { out, sentences } => {
            let seed = if cfg.is_set("seed") {
                cfg.seed()
            } else {
                pivotsmt::synth::DEFAULT_SEED
            };
            let corpus = pivotsmt::synth::generate(*sentences, seed);
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| data(dir.display(), e))?;
            }
            write_corpus(out, &corpus).map_err(core)
        }
    }
}

fn prepare(cfg: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let (corpus, split) = load_and_split(cfg)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| data(dir.display(), e))?;
    }
    let mut r = Report::new("prepare", cfg);
    r.input("corpus", &cfg.required_path("corpus", "prepare")?);
    for (part, c) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let prefix = language_path(out, part);
        write_corpus(&prefix, c).map_err(core)?;
        r.output(part, &prefix).metric(&format!("{part}_rows"), c.len());
    }
    r.metric("input_rows", corpus.len());
    r.write_beside(out)?;
    Ok(())
}

fn load_and_split(cfg: &PipelineConfig) -> Result<(ParallelCorpus, pivotsmt::corpus::CorpusSplit), CliError> {
    let prefix = cfg.required_path("corpus", "prepare")?;
    let corpus = read_corpus(&prefix, &languages(cfg), cfg.profile()).map_err(core)?;
    let split = prepare_split(&corpus, &cfg.experiment()).map_err(CliError::from)?;
    info!("split: train {}, dev {}, test {}", split.train.len(), split.dev.len(), split.test.len());
    Ok((corpus, split))
}

fn build_tm(
    cfg: &PipelineConfig,
    src: &Path,
    tgt: &Path,
    align: &Path,
    lm: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let bitext = read_bitext(src, tgt)?;
    let aligns = read_alignments(align, &bitext).map_err(core)?;
    let lex_st = Lexicon::read(&lexicon_path(align, "lex_s_given_t")).map_err(core)?;
    let lex_ts = Lexicon::read(&lexicon_path(align, "lex_t_given_s")).map_err(core)?;
    let max_len = cfg.count("max_phrase_len");
    let table = build_phrase_table(&bitext, &aligns, &lex_st, &lex_ts, max_len).map_err(core)?;
    std::fs::create_dir_all(out).map_err(|e| data(out.display(), e))?;
    table.write(&out.join(pivotsmt::pivot::PHRASE_TABLE_FILE)).map_err(core)?;
    let mut r = Report::new("build-tm", cfg);
    r.input("src", src).input("tgt", tgt).input("align", align);
    r.metric("phrase_pairs", table.len());
    let lex_reordering = cfg.flag("lex_reordering");
    if lex_reordering {
        let reo = estimate_lex_reordering(&bitext, &aligns, max_len).map_err(core)?;
        reo.write(&out.join(pivotsmt::pivot::REORDERING_FILE)).map_err(core)?;
        r.metric("reordering_entries", reo.len());
    }
    if let Some(lm) = lm {
        let model = NGramModel::read_arpa(lm).map_err(core)?;
        model.write_arpa(&out.join(LM_FILE)).map_err(core)?;
        r.input("lm", lm);
    }
    FeatureWeights::initial(lex_reordering)
        .write(&out.join(pivotsmt::pivot::WEIGHTS_FILE))
        .map_err(core)?;
    let dec = out.join(pivotsmt::pivot::DECODER_CONFIG_FILE);
    pivotsmt::io::write_atomic(&dec, &cfg.decoder().to_text()).map_err(|e| data(dec.display(), e))?;
    r.output("system", out);
    r.write_to(out)?;
    Ok(())
}

fn save_run(run: &SystemRun, dir: &Path, report: &mut Report) -> Result<(), CliError> {
    for (name, sys) in &run.systems {
        let sys_dir = if run.systems.len() == 1 { dir.to_owned() } else { dir.join(name) };
        sys.save(&sys_dir).map_err(core)?;
    }
    let out = dir.join("test.out");
    write_tokens(&out, &run.output)?;
    report.output(&format!("{}_output", run.name), &out);
    report.metric(&format!("{}_bleu", run.name), run.bleu.machine_line());
    for (name, summary) in &run.training {
        report.metric(&format!("{name}_training"), summary);
    }
    for (name, trace) in &run.tuning {
        let rounds: Vec<String> = trace
            .iter()
            .map(|t| format!("{:.4}->{:.4}", t.pool_bleu_before, t.pool_bleu_after))
            .collect();
        report.metric(&format!("{name}_tuning"), rounds.join(" "));
    }
    println!("{} {}", run.name, run.bleu.machine_line());
    Ok(())
}

fn write_split(
    work: &Path,
    split: &pivotsmt::corpus::CorpusSplit,
    report: &mut Report,
) -> Result<(), CliError> {
    std::fs::create_dir_all(work).map_err(|e| data(work.display(), e))?;
    for (part, c) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let prefix = work.join(format!("data.{part}"));
        write_corpus(&prefix, c).map_err(core)?;
        report.metric(&format!("{part}_rows"), c.len());
    }
    Ok(())
}

/// Explicit settings of a pipeline run, loadable with `--config`.
fn write_settings(cfg: &PipelineConfig, dir: &Path) -> Result<(), CliError> {
    let path = dir.join("settings.cfg");
    std::fs::create_dir_all(dir).map_err(|e| data(dir.display(), e))?;
    pivotsmt::io::write_atomic(&path, &cfg.to_text()).map_err(|e| data(path.display(), e))
}

fn pipeline_direct(cfg: &PipelineConfig) -> Result<(), CliError> {
    let work = cfg.required_path("work_dir", "pipeline-direct")?;
    let mut report = Report::new("pipeline-direct", cfg);
    report.input("corpus", &cfg.required_path("corpus", "pipeline-direct")?);
    let (_, split) = load_and_split(cfg)?;
    write_split(&work, &split, &mut report)?;
    let run = run_direct(&split, &cfg.experiment()).map_err(CliError::from)?;
    let dir = work.join("direct");
    save_run(&run, &dir, &mut report)?;
    write_settings(cfg, &dir)?;
    report.write_to(&dir)?;
    Ok(())
}

fn pipeline_pivot(cfg: &PipelineConfig) -> Result<(), CliError> {
    let work = cfg.required_path("work_dir", "pipeline-pivot")?;
    let strategies: Vec<PivotStrategy> = match cfg.get("strategy").unwrap_or("all") {
        "all" => PivotStrategy::ALL.to_vec(),
        s => vec![s.parse().map_err(CliError::from)?],
    };
    let mut report = Report::new("pipeline-pivot", cfg);
    report.input("corpus", &cfg.required_path("corpus", "pipeline-pivot")?);
    let (_, split) = load_and_split(cfg)?;
    write_split(&work, &split, &mut report)?;
    let exp = cfg.experiment();
    let pivots = train_pivot_systems(&split, &exp).map_err(CliError::from)?;
    let root = work.join("pivot");
    save_run(&pivots.sp, &root.join("src-piv"), &mut report)?;
    save_run(&pivots.pt, &root.join("piv-tgt"), &mut report)?;
    let mut runs = Vec::new();
    for s in strategies {
        let run = run_pivot(&split, &exp, s, &pivots).map_err(CliError::from)?;
        save_run(&run, &root.join(s.to_string()), &mut report)?;
        if !run.empty_pseudo_rows.is_empty() {
            report.metric("pseudo_empty_rows", run.empty_pseudo_rows.len());
        }
        runs.push(run);
    }
    if runs.len() >= MIN_MBR_CANDIDATES {
        let refs = split.test.column(&exp.tgt_lang).map_err(core)?;
        let (combined, bleu) = run_mbr(&runs.iter().collect::<Vec<_>>(), &refs).map_err(CliError::from)?;
        let out = root.join("mbr").join("test.out");
        write_tokens(&out, &combined)?;
        report.output("mbr_output", &out).metric("mbr_bleu", bleu.machine_line());
        println!("mbr {}", bleu.machine_line());
    }
    write_settings(cfg, &root)?;
    report.write_to(&root)?;
    Ok(())
}
