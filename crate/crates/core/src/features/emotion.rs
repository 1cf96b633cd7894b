//! 47-dimensional emotion vectors.
//!
//! Layout:
//!
//! | slots    | content                                                   |
//! |----------|-----------------------------------------------------------|
//! | 0..29    | per-category lexicon intensity sum / token count          |
//! | 29       | mean sentiment polarity of lexicon hits (0 if none)       |
//! | 30..47   | auxiliary features, see [`aux`]                           |
//!
//! Auxiliary slots (counts are divided by the token count):
//! `!`, `?`, negations, first/second-person pronouns, all-caps tokens,
//! digit tokens, URL placeholders, emoji, then token count / 40, mean
//! token length / 10, type-token ratio, and six reserved zero slots.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LEXICON_CATEGORIES: usize = 29;
pub const SENTIMENT_SLOT: usize = 29;
pub const AUX_OFFSET: usize = 30;
pub const N_AUX: usize = 17;
pub const EMOTION_DIM: usize = N_LEXICON_CATEGORIES + 1 + N_AUX;

/// Offsets inside the auxiliary block.
pub mod aux {
    pub const EXCLAMATION: usize = 0;
    pub const QUESTION: usize = 1;
    pub const NEGATION: usize = 2;
    pub const PRONOUN: usize = 3;
    pub const ALL_CAPS: usize = 4;
    pub const DIGITS: usize = 5;
    pub const URL: usize = 6;
    pub const EMOJI: usize = 7;
    pub const TOKEN_COUNT: usize = 8;
    pub const MEAN_TOKEN_LEN: usize = 9;
    pub const TYPE_TOKEN_RATIO: usize = 10;
    /// Slots 11..17 are reserved and always zero.
    pub const RESERVED: std::ops::Range<usize> = 11..17;
}

const NEGATIONS: &[&str] = &[
    "not", "no", "never", "none", "nothing", "nobody", "neither", "nor", "cannot", "without",
];
const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "we", "us", "our", "ours", "you", "your", "yours",
];
const URL_TOKENS: &[&str] = &["url", "http", "https", "www"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Emotion category in `0..29`, or `None` for polarity-only entries.
    pub category: Option<usize>,
    pub intensity: f64,
    pub polarity: f64,
}

/// Token-level emotion resource. Keys are lowercase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmotionLexicon {
    entries: BTreeMap<String, LexiconEntry>,
}

impl EmotionLexicon {
    pub fn insert(&mut self, token: impl Into<String>, entry: LexiconEntry) {
        self.entries.insert(token.into().to_lowercase(), entry);
    }

    pub fn get(&self, token: &str) -> Option<&LexiconEntry> {
        self.entries.get(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LexiconEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Multiplies every intensity by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.clone(),
                    LexiconEntry {
                        intensity: e.intensity * c,
                        ..*e
                    },
                )
            })
            .collect();
        Self { entries }
    }

    /// Reads a TSV with columns `token, category, intensity, polarity`.
    /// `category` may be `-` for polarity-only entries. Lines starting with
    /// `#` are comments.
    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lex = Self::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::MalformedLine {
                line: line_no,
                reason,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(format!("expected 4 tab-separated columns, got {}", cols.len())));
            }
            let category = match cols[1].trim() {
                "-" | "" => None,
                c => {
                    let c: usize = c.parse().map_err(|_| bad(format!("bad category '{c}'")))?;
                    if c >= N_LEXICON_CATEGORIES {
                        return Err(bad(format!("category {c} >= {N_LEXICON_CATEGORIES}")));
                    }
                    Some(c)
                }
            };
            let intensity: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad intensity '{}'", cols[2])))?;
            let polarity: f64 = cols[3]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad polarity '{}'", cols[3])))?;
            if !intensity.is_finite() || intensity < 0.0 {
                return Err(bad(format!("intensity {intensity} must be finite and >= 0")));
            }
            if !(-1.0..=1.0).contains(&polarity) {
                return Err(bad(format!("polarity {polarity} outside [-1, 1]")));
            }
            lex.insert(
                cols[0].trim(),
                LexiconEntry {
                    category,
                    intensity,
                    polarity,
                },
            );
        }
        Ok(lex)
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut emit = || -> std::io::Result<()> {
            writeln!(w, "# token\tcategory\tintensity\tpolarity")?;
            for (tok, e) in &self.entries {
                let cat = e.category.map_or("-".to_string(), |c| c.to_string());
                writeln!(w, "{tok}\t{cat}\t{}\t{}", e.intensity, e.polarity)?;
            }
            w.flush()
        };
        emit().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionVector(pub [f64; EMOTION_DIM]);

impl EmotionVector {
    pub fn zeros() -> Self {
        Self([0.0; EMOTION_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn aux(&self, offset: usize) -> f64 {
        self.0[AUX_OFFSET + offset]
    }
}

fn is_emoji(token: &str) -> bool {
    let mut chars = token.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => {
            let c = c as u32;
            (0x1F300..=0x1FAFF).contains(&c) || (0x2600..=0x27BF).contains(&c)
        }
        _ => false,
    }
}

fn is_all_caps(token: &str) -> bool {
    let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

/// Emotion vector of one tokenized text. Tokens may carry their original
/// case (used for the all-caps feature); lexicon lookups are lowercase.
pub fn emotion_vector<S: AsRef<str>>(tokens: &[S], lex: &EmotionLexicon) -> EmotionVector {
    let mut v = EmotionVector::zeros();
    let n = tokens.len();
    if n == 0 {
        return v;
    }
    let nf = n as f64;
    let mut polarity_sum = 0.0;
    let mut hits = 0usize;
    let mut counts = [0usize; 8];
    let mut char_total = 0usize;
    let mut types = HashSet::with_capacity(n);
    for raw in tokens {
        let raw = raw.as_ref();
        let lower = raw.to_lowercase();
        if let Some(e) = lex.get(&lower) {
            if let Some(c) = e.category {
                v.0[c] += e.intensity;
            }
            polarity_sum += e.polarity;
            hits += 1;
        }
        match lower.as_str() {
            "!" => counts[aux::EXCLAMATION] += 1,
            "?" => counts[aux::QUESTION] += 1,
            _ => {}
        }
        if NEGATIONS.contains(&lower.as_str()) {
            counts[aux::NEGATION] += 1;
        }
        if PRONOUNS.contains(&lower.as_str()) {
            counts[aux::PRONOUN] += 1;
        }
        if is_all_caps(raw) {
            counts[aux::ALL_CAPS] += 1;
        }
        if raw.chars().all(|c| c.is_ascii_digit()) {
            counts[aux::DIGITS] += 1;
        }
        if URL_TOKENS.contains(&lower.as_str()) {
            counts[aux::URL] += 1;
        }
        if is_emoji(raw) {
            counts[aux::EMOJI] += 1;
        }
        char_total += raw.chars().count();
        types.insert(lower);
    }
    for x in v.0[..N_LEXICON_CATEGORIES].iter_mut() {
        *x /= nf;
    }
    v.0[SENTIMENT_SLOT] = if hits > 0 {
        polarity_sum / hits as f64
    } else {
        0.0
    };
    for (i, c) in counts.iter().enumerate() {
        v.0[AUX_OFFSET + i] = *c as f64 / nf;
    }
    v.0[AUX_OFFSET + aux::TOKEN_COUNT] = nf / 40.0;
    v.0[AUX_OFFSET + aux::MEAN_TOKEN_LEN] = char_total as f64 / nf / 10.0;
    v.0[AUX_OFFSET + aux::TYPE_TOKEN_RATIO] = types.len() as f64 / nf;
    v
}
