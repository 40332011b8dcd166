//! `pivotsmt` command-line tool.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, PipelineConfig};

/// Error categories, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn category(&self) -> (&'static str, u8) {
        match self {
            CliError::Usage(_) => ("usage", 2),
            CliError::Config(_) => ("config", 3),
            CliError::Data(_) => ("data", 4),
            CliError::Internal(_) => ("internal", 5),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<pivotsmt::Error> for CliError {
    fn from(e: pivotsmt::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

macro_rules! overrides {
    ($($field:ident => $flag:literal),* $(,)?) => {
        /// Configuration keys; a flag beats the config file.
        #[derive(Debug, Args, Default)]
        pub struct Overrides {
            $(
                #[arg(long = $flag, global = true, value_name = "VALUE", help_heading = "Settings")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut v = Vec::new();
                $(
                    if let Some(x) = &self.$field {
                        v.push((stringify!($field), x.as_str()));
                    }
                )*
                v
            }
        }
    };
}

overrides! {
    corpus => "corpus",
    work_dir => "work-dir",
    src_lang => "src-lang",
    piv_lang => "piv-lang",
    tgt_lang => "tgt-lang",
    profile => "profile",
    max_len => "max-len",
    max_ratio => "max-ratio",
    dev_size => "dev-size",
    test_size => "test-size",
    pool_factor => "pool-factor",
    order => "order",
    align_iterations => "align-iterations",
    max_phrase_len => "max-phrase-len",
    lex_reordering => "lex-reordering",
    beam_size => "beam-size",
    distortion_limit => "distortion-limit",
    nbest_size => "nbest-size",
    max_options => "max-options",
    tune_rounds => "tune-rounds",
    top_k => "top-k",
    strategy => "strategy",
    samples => "samples",
    level => "level",
    seed => "seed",
}

#[derive(Debug, Parser)]
#[command(name = "pivotsmt", version, about = "Phrase-based SMT with pivot-language strategies")]
pub struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "PIVOTSMT_JOBS")]
    jobs: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize, filter and split a multilingual corpus.
    Prepare {
        /// Output prefix; files are `<out>.{train,dev,test}.<lang>`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a Kneser-Ney language model.
    BuildLm {
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Word-align a bitext (writes lexicons next to the alignment file).
    Align {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build phrase and reordering tables into a system directory.
    BuildTm {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        align: PathBuf,
        /// ARPA model copied into the system directory.
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune the weights of a system directory on a development set and
    /// save the tuned copy to `--out`.
    Tune {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate a file with a system directory.
    Translate {
        #[arg(long)]
        system: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write n-best lists here.
        #[arg(long)]
        nbest: Option<PathBuf>,
    },
    /// Join two phrase tables over their shared pivot phrases.
    Triangulate {
        #[arg(long)]
        sp: PathBuf,
        #[arg(long)]
        pt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate through a pivot language by chaining two systems.
    Cascade {
        #[arg(long = "sp-sys")]
        sp_sys: PathBuf,
        #[arg(long = "pt-sys")]
        pt_sys: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate the pivot side of a source-pivot corpus.
    Pseudo {
        /// Corpus prefix holding `<prefix>.<src_lang>` and `<prefix>.<piv_lang>`.
        #[arg(long = "sp-corpus")]
        sp_corpus: PathBuf,
        #[arg(long = "pt-sys")]
        pt_sys: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum-Bayes-risk combination of line-aligned system outputs.
    Mbr {
        #[arg(long, num_args = 1.., required = true)]
        lists: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus BLEU.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Directory for report.txt (default: `<hyp>.evaluate.report.txt`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Paired bootstrap significance test.
    Significance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Directory for report.txt (default: `<a>.significance.report.txt`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Average RQuantity of an aligned bitext.
    Rquantity {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long)]
        align: PathBuf,
        /// Directory for report.txt (default: `<align>.rquantity.report.txt`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Prepare, train, tune and test a direct system.
    PipelineDirect,
    /// Prepare, train, tune and test pivot systems (and MBR for `all`).
    PipelinePivot,
    /// Write the synthetic three-language fixture corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = pivotsmt::synth::DEFAULT_SENTENCES)]
        sentences: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare { .. } => "prepare",
            Command::BuildLm { .. } => "build-lm",
            Command::Align { .. } => "align",
            Command::BuildTm { .. } => "build-tm",
            Command::Tune { .. } => "tune",
            Command::Translate { .. } => "translate",
            Command::Triangulate { .. } => "triangulate",
            Command::Cascade { .. } => "cascade",
            Command::Pseudo { .. } => "pseudo",
            Command::Mbr { .. } => "mbr",
            Command::Evaluate { .. } => "evaluate",
            Command::Significance { .. } => "significance",
            Command::Rquantity { .. } => "rquantity",
            Command::PipelineDirect => "pipeline-direct",
            Command::PipelinePivot => "pipeline-pivot",
            Command::Synth { .. } => "synth",
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for (k, v) in cli.overrides.pairs() {
        cfg.set(k, v).map_err(|e| CliError::Config(format!("--{}: {}", k.replace('_', "-"), e.0)))?;
    }
    cfg.validate_for(cli.command.name())?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(cli)?;
    commands::dispatch(&cli.command, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    std::panic::set_hook(Box::new(|_| {}));
    let outcome = std::panic::catch_unwind(|| run(&cli))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(CliError::Internal(msg))
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = e.category();
            let msg = e.message().replace('\n', " ");
            eprintln!("error[{category}]: {}: {msg}", cli.command.name());
            ExitCode::from(code)
        }
    }
}
