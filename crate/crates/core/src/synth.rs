//! Deterministic three-language corpus generator used as the end-to-end
//! fixture. One abstract sentence is drawn per row and realized in each
//! language through a token mapping plus a few local reorderings:
//!
//! * `src`: `DET ADJ NOUN`, `VERB ADV`.
//! * `piv`: adjectives follow their noun.
//! * `tgt`: adverbs precede their verb and every preposition becomes two
//!   tokens.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ParallelCorpus, Sentence};

pub const LANGUAGES: [&str; 3] = ["src", "piv", "tgt"];
pub const DEFAULT_SEED: u64 = 20_100;
pub const DEFAULT_SENTENCES: usize = 2000;

const DETS: usize = 3;
const ADJS: usize = 12;
const NOUNS: usize = 30;
const VERBS: usize = 15;
const ADVS: usize = 6;
const PREPS: usize = 5;

#[derive(Debug, Clone, Copy)]
struct NounPhrase {
    det: usize,
    adj: Option<usize>,
    noun: usize,
}

#[derive(Debug, Clone, Copy)]
struct Clause {
    subject: NounPhrase,
    verb: usize,
    adv: Option<usize>,
    object: NounPhrase,
    pp: Option<(usize, NounPhrase)>,
}

fn noun_phrase(rng: &mut ChaCha8Rng) -> NounPhrase {
    NounPhrase {
        det: rng.gen_range(0..DETS),
        adj: rng.gen_bool(0.5).then(|| rng.gen_range(0..ADJS)),
        noun: rng.gen_range(0..NOUNS),
    }
}

fn clause(rng: &mut ChaCha8Rng) -> Clause {
    Clause {
        subject: noun_phrase(rng),
        verb: rng.gen_range(0..VERBS),
        adv: rng.gen_bool(0.4).then(|| rng.gen_range(0..ADVS)),
        object: noun_phrase(rng),
        pp: rng
            .gen_bool(0.5)
            .then(|| (rng.gen_range(0..PREPS), noun_phrase(rng))),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Lang {
    Src,
    Piv,
    Tgt,
}

impl Lang {
    fn prefix(self) -> char {
        match self {
            Lang::Src => 's',
            Lang::Piv => 'p',
            Lang::Tgt => 't',
        }
    }
}

fn word(lang: Lang, cat: &str, i: usize) -> String {
    format!("{}{cat}{i}", lang.prefix())
}

fn realize_np(np: &NounPhrase, lang: Lang, out: &mut Vec<String>) {
    out.push(word(lang, "det", np.det));
    let noun = word(lang, "noun", np.noun);
    match (np.adj, lang) {
        (Some(a), Lang::Piv) => {
            out.push(noun);
            out.push(word(lang, "adj", a));
        }
        (Some(a), _) => {
            out.push(word(lang, "adj", a));
            out.push(noun);
        }
        (None, _) => out.push(noun),
    }
}

fn realize(c: &Clause, lang: Lang) -> Sentence {
    let mut out = Vec::new();
    realize_np(&c.subject, lang, &mut out);
    let verb = word(lang, "verb", c.verb);
    match (c.adv, lang) {
        (Some(a), Lang::Tgt) => {
            out.push(word(lang, "adv", a));
            out.push(verb);
        }
        (Some(a), _) => {
            out.push(verb);
            out.push(word(lang, "adv", a));
        }
        (None, _) => out.push(verb),
    }
    realize_np(&c.object, lang, &mut out);
    if let Some((p, np)) = &c.pp {
        if lang == Lang::Tgt {
            out.push(format!("tprep{p}a"));
            out.push(format!("tprep{p}b"));
        } else {
            out.push(word(lang, "prep", *p));
        }
        realize_np(np, lang, &mut out);
    }
    Sentence::new(out).expect("generated tokens contain no whitespace")
}

/// `sentences` rows in the languages of [`LANGUAGES`].
pub fn generate(sentences: usize, seed: u64) -> ParallelCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..sentences)
        .map(|_| {
            let c = clause(&mut rng);
            vec![realize(&c, Lang::Src), realize(&c, Lang::Piv), realize(&c, Lang::Tgt)]
        })
        .collect();
    ParallelCorpus::new(LANGUAGES.iter().map(|l| l.to_string()).collect(), rows)
        .expect("every row has three sentences")
}
