//! News articles with their user reports, split into labeled and unlabeled
//! partitions.

mod jsonl;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use jsonl::{
    load_corpus, load_hidden_labels, load_weak_labels, read_corpus, write_corpus,
    write_hidden_labels, write_weak_labels, WeakLabelRecord,
};
pub use synth::{generate_synthetic, SynthConfig, Synthetic};

/// Binary veracity label. `Real = 0`, `Fake = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(format!("label {other} outside {{0,1}}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unlabeled,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::Unlabeled];

    pub fn is_labeled(self) -> bool {
        !matches!(self, Split::Unlabeled)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unlabeled => "unlabeled",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unlabeled" => Ok(Split::Unlabeled),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// A single user feedback report. Empty text is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Report {
    pub text: String,
}

impl Report {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub article: String,
    pub reports: Vec<Report>,
    pub gold_label: Option<Label>,
    pub split: Split,
}

impl Sample {
    fn check(&self) -> std::result::Result<(), String> {
        match (self.split.is_labeled(), self.gold_label) {
            (true, None) => Err(format!("split {} requires a label", self.split)),
            (false, Some(_)) => Err("unlabeled samples must not carry a label".into()),
            _ => Ok(()),
        }
    }
}

/// Immutable collection of samples with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    samples: Vec<Sample>,
}

impl Corpus {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            s.check()
                .map_err(|reason| Error::MalformedLine { line: i + 1, reason })?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId {
                    line: i + 1,
                    id: s.id.clone(),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_vec(&self, split: Split) -> Vec<&Sample> {
        self.split(split).collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }
}

/// True labels of unlabeled samples, kept apart from the corpus so training
/// code never sees them. Used only for weak-label diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HiddenLabels {
    labels: BTreeMap<String, Label>,
}

impl HiddenLabels {
    pub fn new(labels: BTreeMap<String, Label>) -> Self {
        Self { labels }
    }

    pub fn get(&self, id: &str) -> Option<Label> {
        self.labels.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Label)> {
        self.labels.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: Split,
    pub total: usize,
    pub fake: usize,
    pub real: usize,
    /// Fraction of fake samples; `None` for unlabeled or empty splits.
    pub balance: Option<f64>,
    pub imbalanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCounts {
    pub splits: Vec<SplitStats>,
    pub tolerance: f64,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> &SplitStats {
        self.splits
            .iter()
            .find(|s| s.split == split)
            .expect("all splits are always present")
    }

    pub fn any_imbalanced(&self) -> bool {
        self.splits.iter().any(|s| s.imbalanced)
    }
}

pub const DEFAULT_BALANCE_TOLERANCE: f64 = 0.05;

/// Per-split counts. A labeled split is flagged when its fake fraction
/// deviates from 0.5 by more than `tolerance`, or when it lacks a class.
pub fn split_counts(corpus: &Corpus, tolerance: f64) -> SplitCounts {
    let splits = Split::ALL
        .iter()
        .map(|&split| {
            let mut total = 0;
            let mut fake = 0;
            let mut real = 0;
            for s in corpus.split(split) {
                total += 1;
                match s.gold_label {
                    Some(Label::Fake) => fake += 1,
                    Some(Label::Real) => real += 1,
                    None => {}
                }
            }
            let balance = (split.is_labeled() && total > 0).then(|| fake as f64 / total as f64);
            let imbalanced = balance.map_or(false, |b| {
                (b - 0.5).abs() > tolerance + 1e-12 || fake == 0 || real == 0
            });
            SplitStats {
                split,
                total,
                fake,
                real,
                balance,
                imbalanced,
            }
        })
        .collect();
    SplitCounts { splits, tolerance }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: Option<Label>, split: Split) -> Sample {
        Sample {
            id: id.into(),
            article: "a b".into(),
            reports: vec![],
            gold_label: label,
            split,
        }
    }

    #[test]
    fn balanced_split_has_ratio_half() {
        let mut v = Vec::new();
        for i in 0..20 {
            v.push(sample(&format!("s{i}"), Some(Label::from_bit(i % 2 == 0)), Split::Train));
        }
        let c = Corpus::new(v).unwrap();
        let counts = split_counts(&c, DEFAULT_BALANCE_TOLERANCE);
        let train = counts.get(Split::Train);
        assert_eq!(train.balance, Some(0.5));
        assert!(!train.imbalanced);
        assert_eq!(counts.get(Split::Unlabeled).balance, None);
    }

    #[test]
    fn three_to_one_is_flagged() {
        let v = vec![
            sample("a", Some(Label::Fake), Split::Test),
            sample("b", Some(Label::Fake), Split::Test),
            sample("c", Some(Label::Fake), Split::Test),
            sample("d", Some(Label::Real), Split::Test),
        ];
        let c = Corpus::new(v).unwrap();
        let t = split_counts(&c, DEFAULT_BALANCE_TOLERANCE).get(Split::Test).clone();
        assert_eq!(t.balance, Some(0.75));
        assert!(t.imbalanced);
    }

    #[test]
    fn label_split_consistency_is_enforced() {
        assert!(Corpus::new(vec![sample("a", None, Split::Train)]).is_err());
        assert!(Corpus::new(vec![sample("a", Some(Label::Real), Split::Unlabeled)]).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![
            sample("a", None, Split::Unlabeled),
            sample("a", None, Split::Unlabeled),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate id at line 2"));
    }
}
