//! Flat `key = value` configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pivotsmt::corpus::{language_path, Profile};
use pivotsmt::decoder::{DecoderConfig, DistortionLimit};
use pivotsmt::pipeline::{ExperimentConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Path,
    Text,
    Count { min: usize },
    OptCount,
    Distortion,
    Positive,
    Level,
    Flag,
    Seed,
    Profile,
    Strategy,
}

pub struct KeySpec {
    pub name: &'static str,
    kind: Kind,
    pub default: Option<&'static str>,
}

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>) -> KeySpec {
    KeySpec { name, kind, default }
}

/// Every recognised key, in serialization order.
pub const KEYS: &[KeySpec] = &[
    key("corpus", Kind::Path, None),
    key("work_dir", Kind::Path, None),
    key("src_lang", Kind::Text, None),
    key("piv_lang", Kind::Text, None),
    key("tgt_lang", Kind::Text, None),
    key("profile", Kind::Profile, Some("plain")),
    key("max_len", Kind::Count { min: 1 }, Some("100")),
    key("max_ratio", Kind::Positive, Some("3")),
    key("dev_size", Kind::Count { min: 1 }, Some("100")),
    key("test_size", Kind::Count { min: 1 }, Some("200")),
    key("pool_factor", Kind::Count { min: 1 }, Some("2")),
    key("order", Kind::Count { min: 1 }, Some("5")),
    key("align_iterations", Kind::Count { min: 1 }, Some("5")),
    key("max_phrase_len", Kind::Count { min: 1 }, Some("10")),
    key("lex_reordering", Kind::Flag, Some("true")),
    key("beam_size", Kind::Count { min: 1 }, Some("100")),
    key("distortion_limit", Kind::Distortion, Some("6")),
    key("nbest_size", Kind::Count { min: 1 }, Some("20")),
    key("max_options", Kind::Count { min: 1 }, Some("20")),
    key("tune_rounds", Kind::Count { min: 1 }, Some("5")),
    key("top_k", Kind::OptCount, Some("none")),
    key("strategy", Kind::Strategy, Some("all")),
    key("samples", Kind::Count { min: 1 }, Some("1000")),
    key("level", Kind::Level, Some("0.99")),
    key("seed", Kind::Seed, Some("1")),
];

fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn check(kind: Kind, name: &str, v: &str) -> Result<(), String> {
    let count = |min: usize| match v.parse::<usize>() {
        Ok(n) if n >= min => Ok(()),
        Ok(_) => Err(format!("{name} must be at least {min}, got {v}")),
        Err(_) => Err(format!("{name} must be a non-negative integer, got {v:?}")),
    };
    match kind {
        Kind::Path | Kind::Text => {
            if v.is_empty() {
                Err(format!("{name} must not be empty"))
            } else if kind == Kind::Text && v.chars().any(|c| c.is_whitespace() || c == '/') {
                Err(format!("{name} must be a plain language tag, got {v:?}"))
            } else {
                Ok(())
            }
        }
        Kind::Count { min } => count(min),
        Kind::OptCount => {
            if v == "none" {
                Ok(())
            } else {
                count(1)
            }
        }
        Kind::Distortion => v
            .parse::<DistortionLimit>()
            .map(|_| ())
            .map_err(|_| format!("{name} must be a non-negative integer or none, got {v:?}")),
        Kind::Positive => match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(()),
            _ => Err(format!("{name} must be a positive number, got {v:?}")),
        },
        Kind::Level => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x <= 1.0 => Ok(()),
            _ => Err(format!("{name} must lie in (0, 1], got {v:?}")),
        },
        Kind::Flag => v
            .parse::<bool>()
            .map(|_| ())
            .map_err(|_| format!("{name} must be true or false, got {v:?}")),
        Kind::Seed => v
            .parse::<u64>()
            .map(|_| ())
            .map_err(|_| format!("{name} must be an unsigned 64-bit integer, got {v:?}")),
        Kind::Profile => v.parse::<Profile>().map(|_| ()).map_err(|e| format!("{name}: {e}")),
        Kind::Strategy => match v {
            "cascade" | "pseudo" | "triangulation" | "all" => Ok(()),
            _ => Err(format!("{name} must be cascade, pseudo, triangulation or all, got {v:?}")),
        },
    }
}

/// Explicitly set values; anything absent falls back to its default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineConfig {
    values: BTreeMap<&'static str, String>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`, got {:?}", i + 1, raw.trim())))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", i + 1, e.0)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = pivotsmt::io::read_utf8(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let ks = key_spec(key).ok_or_else(|| ConfigError(format!("unknown key {key:?}")))?;
        check(ks.kind, ks.name, value).map_err(ConfigError)?;
        self.values.insert(ks.name, value.to_owned());
        Ok(())
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Raw value, falling back to the default.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .or_else(|| key_spec(key).and_then(|s| s.default))
    }

    /// Explicit settings only, in key order.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .filter_map(|k| self.values.get(k.name).map(|v| format!("{} = {}\n", k.name, v)))
            .collect()
    }

    /// Every key with its effective value.
    pub fn effective_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{} = {}\n", k.name, self.get(k.name).unwrap_or("(unset)")))
            .collect()
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> T {
        let v = self.get(key).unwrap_or_else(|| panic!("{key} has no default"));
        v.parse()
            .unwrap_or_else(|_| panic!("{key} was validated on insertion"))
    }

    pub fn count(&self, key: &str) -> usize {
        self.parsed(key)
    }

    pub fn float(&self, key: &str) -> f64 {
        self.parsed(key)
    }

    pub fn flag(&self, key: &str) -> bool {
        self.parsed(key)
    }

    pub fn seed(&self) -> u64 {
        self.parsed("seed")
    }

    pub fn profile(&self) -> Profile {
        self.parsed("profile")
    }

    pub fn opt_count(&self, key: &str) -> Option<usize> {
        match self.get(key) {
            Some("none") | None => None,
            Some(v) => v.parse().ok(),
        }
    }

    pub fn required(&self, key: &str, command: &str) -> Result<&str, ConfigError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError(format!("command {command} needs `{key}` (config file or --{})", key.replace('_', "-"))))
    }

    pub fn required_path(&self, key: &str, command: &str) -> Result<PathBuf, ConfigError> {
        self.required(key, command).map(PathBuf::from)
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            beam_size: self.count("beam_size"),
            distortion_limit: self.parsed::<DistortionLimit>("distortion_limit").0,
            nbest_size: self.count("nbest_size"),
            use_lex_reordering: self.flag("lex_reordering"),
            max_options: self.count("max_options"),
            ..DecoderConfig::default()
        }
    }

    /// `base` with the decoder keys that were set explicitly.
    pub fn decoder_overrides(&self, base: &DecoderConfig) -> DecoderConfig {
        let full = self.decoder();
        let mut out = base.clone();
        if self.is_set("beam_size") {
            out.beam_size = full.beam_size;
        }
        if self.is_set("distortion_limit") {
            out.distortion_limit = full.distortion_limit;
        }
        if self.is_set("nbest_size") {
            out.nbest_size = full.nbest_size;
        }
        if self.is_set("max_options") {
            out.max_options = full.max_options;
        }
        out
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            align_iterations: self.count("align_iterations"),
            max_phrase_len: self.count("max_phrase_len"),
            lm_order: self.count("order"),
            lex_reordering: self.flag("lex_reordering"),
            decoder: self.decoder(),
            tune_rounds: self.count("tune_rounds"),
        }
    }

    /// Experiment settings; language tags must already be checked.
    pub fn experiment(&self) -> ExperimentConfig {
        let tgt = self.get("tgt_lang").unwrap_or("tgt").to_owned();
        ExperimentConfig {
            src_lang: self.get("src_lang").unwrap_or("src").to_owned(),
            piv_lang: self.get("piv_lang").map_or_else(|| tgt.clone(), str::to_owned),
            tgt_lang: tgt,
            max_len: self.count("max_len"),
            max_ratio: self.float("max_ratio"),
            dev_size: self.count("dev_size"),
            test_size: self.count("test_size"),
            pool_factor: self.count("pool_factor"),
            train: self.train(),
            triangulation_top_k: self.opt_count("top_k"),
        }
    }

    /// Cross-field checks for a command: required keys present, corpus
    /// files readable.
    pub fn validate_for(&self, command: &str) -> Result<(), ConfigError> {
        let needs: &[&str] = match command {
            "prepare" => &["corpus", "src_lang", "tgt_lang"],
            "pipeline-direct" => &["corpus", "work_dir", "src_lang", "tgt_lang"],
            "pipeline-pivot" => &["corpus", "work_dir", "src_lang", "piv_lang", "tgt_lang"],
            "pseudo" => &["src_lang", "piv_lang", "tgt_lang"],
            _ => &[],
        };
        for k in needs {
            self.required(k, command)?;
        }
        let langs: Vec<&str> = ["src_lang", "piv_lang", "tgt_lang"]
            .iter()
            .filter_map(|k| self.values.get(k).map(String::as_str))
            .collect();
        for (i, a) in langs.iter().enumerate() {
            if langs[i + 1..].contains(a) {
                return Err(ConfigError(format!("language tag {a:?} is used twice")));
            }
        }
        if let Some(corpus) = self.values.get("corpus").filter(|_| needs.contains(&"corpus")) {
            for k in needs.iter().filter(|k| k.ends_with("_lang")) {
                let path = language_path(Path::new(corpus), &self.values[k]);
                if !path.is_file() {
                    return Err(ConfigError(format!("corpus file {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }
}
