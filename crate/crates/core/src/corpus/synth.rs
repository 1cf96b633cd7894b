//! Synthetic news-with-reports corpora.
//!
//! Reports of fake articles carry refuting / negative-emotion tokens
//! (`neg*`), reports of real articles carry neutral / positive tokens
//! (`pos*`). Each report carries one such token with probability
//! `signal_strength`; everything else is drawn from a filler vocabulary
//! (`w*`). Token ranks follow a Zipf law so a small labeled set sees the
//! frequent signal tokens but not the long tail, which is what leaves room
//! for unlabeled data to help. Only the most frequent signal tokens are
//! listed in the exported emotion lexicon.
//!
//! The generator also produces stand-in pretrained word vectors in which
//! signal tokens of the same class share a common direction, so that a
//! model can transfer from frequent signal tokens to rare ones.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, HiddenLabels, Label, Report, Sample, Split, WeakLabelRecord};
use crate::error::{Error, Result};
use crate::features::{EmotionLexicon, LexiconEntry, Vocab, N_LEXICON_CATEGORIES, PAD_TOKEN, UNK_STD, UNK_TOKEN};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Total number of distinct word types (signal + filler).
    pub vocab_size: usize,
    /// Probability that a report carries a class-indicative token.
    pub signal_strength: f64,
    /// Inclusive range for the number of reports per article.
    pub report_count_range: (usize, usize),
    pub seed: u64,
    /// Fraction of hidden labels flipped in the exported oracle-noisy
    /// weak-label file.
    pub weak_noise: f64,
    /// Signal tokens per class.
    pub signal_vocab: usize,
    /// Fraction of each class's signal tokens (most frequent first) that
    /// appear in the emotion lexicon.
    pub lexicon_coverage: f64,
    pub zipf_exponent: f64,
    /// Probability that a signal-bearing report uses the *other* class's
    /// vocabulary.
    pub cross_talk: f64,
    pub article_len: (usize, usize),
    pub report_len: (usize, usize),
    /// Norm of the shared class direction in generated word vectors,
    /// relative to the norm of each vector's random part.
    pub embedding_polarity: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_labeled: 200,
            n_unlabeled: 2000,
            n_val: 500,
            n_test: 500,
            vocab_size: 600,
            signal_strength: 0.8,
            report_count_range: (1, 4),
            seed: 0,
            weak_noise: 0.3,
            signal_vocab: 120,
            lexicon_coverage: 0.1,
            zipf_exponent: 1.0,
            cross_talk: 0.0,
            article_len: (8, 14),
            report_len: (3, 7),
            embedding_polarity: 0.3,
        }
    }
}

impl SynthConfig {
    /// The corpus the ablation benchmark runs on: 200 labeled / 500 val /
    /// 500 test / 2000 unlabeled, signal strength 0.8.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Corpus with the same counts as the original WeChat sub-datasets.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            n_labeled: 2440,
            n_val: 1000,
            n_test: 1740,
            n_unlabeled: 22981,
            seed,
            ..Self::default()
        }
    }

    pub fn reserved_vocab(&self) -> usize {
        2 * self.signal_vocab
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("signal_strength", self.signal_strength)?;
        unit("weak_noise", self.weak_noise)?;
        unit("lexicon_coverage", self.lexicon_coverage)?;
        unit("cross_talk", self.cross_talk)?;
        if self.vocab_size <= self.reserved_vocab() {
            return Err(Error::Config(format!(
                "vocab_size {} must exceed the reserved emotion vocabulary ({})",
                self.vocab_size,
                self.reserved_vocab()
            )));
        }
        if self.signal_vocab == 0 {
            return Err(Error::Config("signal_vocab must be positive".into()));
        }
        for (name, (lo, hi)) in [
            ("report_count_range", self.report_count_range),
            ("article_len", self.article_len),
            ("report_len", self.report_len),
        ] {
            if lo > hi {
                return Err(Error::Config(format!("{name}: min {lo} > max {hi}")));
            }
        }
        if !(self.embedding_polarity.is_finite() && self.embedding_polarity >= 0.0) {
            return Err(Error::Config("embedding_polarity must be finite and >= 0".into()));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::Config("zipf_exponent must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn filler_vocab(&self) -> usize {
        self.vocab_size - self.reserved_vocab()
    }

    pub fn fake_token(rank: usize) -> String {
        format!("neg{rank}")
    }

    pub fn real_token(rank: usize) -> String {
        format!("pos{rank}")
    }

    fn filler_token(rank: usize) -> String {
        format!("w{rank}")
    }

    /// Every word type the generator can emit: fake-class signal, real-class
    /// signal, then filler, each in rank order.
    pub fn word_types(&self) -> Vec<String> {
        (0..self.signal_vocab)
            .map(Self::fake_token)
            .chain((0..self.signal_vocab).map(Self::real_token))
            .chain((0..self.filler_vocab()).map(Self::filler_token))
            .collect()
    }

    /// Stand-in pretrained vectors for [`Self::word_types`]: `z + c a sqrt(dim) u`
    /// with `z ~ N(0, I)`, a random unit direction `u`, `a` the
    /// `embedding_polarity` and `c` = +1 for fake-class tokens, -1 for
    /// real-class tokens, 0 for filler.
    pub fn word_vectors(&self, dim: usize) -> Result<Vocab> {
        self.validate()?;
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7ec7_0125);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut dir: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        let shift = self.embedding_polarity * (dim as f64).sqrt();

        let types = self.word_types();
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut data = vec![0.0; dim];
        let unk = Normal::new(0.0, UNK_STD).expect("valid std");
        data.extend((0..dim).map(|_| unk.sample(&mut rng)));
        for (i, tok) in types.into_iter().enumerate() {
            let c = if i < self.signal_vocab {
                1.0
            } else if i < 2 * self.signal_vocab {
                -1.0
            } else {
                0.0
            };
            data.extend(dir.iter().map(|u| normal.sample(&mut rng) + c * shift * u));
            tokens.push(tok);
        }
        let rows = tokens.len();
        Vocab::from_parts(tokens, Mat::from_vec(rows, dim, data))
    }

    /// Lexicon entries for the first `lexicon_coverage` fraction of each
    /// class's signal vocabulary. Fake-class tokens use categories 0..14
    /// with negative polarity, real-class tokens categories 14..29 with
    /// positive polarity.
    pub fn lexicon(&self) -> EmotionLexicon {
        let covered = (self.lexicon_coverage * self.signal_vocab as f64).ceil() as usize;
        let covered = covered.min(self.signal_vocab);
        let mut lex = EmotionLexicon::default();
        let neg_cats = 14;
        let pos_cats = N_LEXICON_CATEGORIES - neg_cats;
        for k in 0..covered {
            let intensity = 1.0 + (k % 3) as f64;
            let strength = if k % 2 == 0 { 1.0 } else { 0.5 };
            lex.insert(
                Self::fake_token(k),
                LexiconEntry {
                    category: Some(k % neg_cats),
                    intensity,
                    polarity: -strength,
                },
            );
            lex.insert(
                Self::real_token(k),
                LexiconEntry {
                    category: Some(neg_cats + k % pos_cats),
                    intensity,
                    polarity: strength,
                },
            );
        }
        lex
    }
}

/// Generator output: the corpus, the hidden labels of its unlabeled split,
/// and the emotion lexicon describing its signal vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub config: SynthConfig,
    pub corpus: Corpus,
    pub hidden: HiddenLabels,
    pub lexicon: EmotionLexicon,
}

impl Synthetic {
    /// Hidden labels with exactly `round(weak_noise * n)` of them flipped,
    /// as hard 0/1 weak labels.
    pub fn noisy_weak_labels(&self) -> Vec<WeakLabelRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_0f_4015e);
        let entries: Vec<(&str, Label)> = self.hidden.iter().collect();
        let n_flip = (self.config.weak_noise * entries.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.shuffle(&mut rng);
        let mut flip = vec![false; entries.len()];
        for &i in order.iter().take(n_flip) {
            flip[i] = true;
        }
        entries
            .iter()
            .zip(flip)
            .map(|((id, label), f)| WeakLabelRecord {
                id: id.to_string(),
                y_u: if f { label.flip() } else { *label }.as_f64(),
            })
            .collect()
    }
}

struct ZipfTable {
    cdf: Vec<f64>,
}

impl ZipfTable {
    fn new(n: usize, exponent: f64) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 0..n {
            acc += 1.0 / ((r + 1) as f64).powf(exponent);
            cdf.push(acc);
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        Self { cdf }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

/// Deterministic in `cfg`: the same config always produces the same corpus.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let filler = ZipfTable::new(cfg.filler_vocab(), cfg.zipf_exponent);
    let signal = ZipfTable::new(cfg.signal_vocab, cfg.zipf_exponent);

    let mut samples = Vec::with_capacity(cfg.n_labeled + cfg.n_val + cfg.n_test + cfg.n_unlabeled);
    let mut hidden = BTreeMap::new();
    for (split, n) in [
        (Split::Train, cfg.n_labeled),
        (Split::Val, cfg.n_val),
        (Split::Test, cfg.n_test),
        (Split::Unlabeled, cfg.n_unlabeled),
    ] {
        let mut labels: Vec<Label> = (0..n).map(|i| Label::from_bit(i < n / 2)).collect();
        labels.shuffle(&mut rng);
        for (i, label) in labels.into_iter().enumerate() {
            let id = format!("{split}-{i:05}");
            let article = filler_text(&mut rng, &filler, cfg.article_len);
            let m = rng.gen_range(cfg.report_count_range.0..=cfg.report_count_range.1);
            let reports = (0..m)
                .map(|_| Report::new(report_text(&mut rng, cfg, &filler, &signal, label)))
                .collect();
            let gold_label = if split.is_labeled() {
                Some(label)
            } else {
                hidden.insert(id.clone(), label);
                None
            };
            samples.push(Sample {
                id,
                article,
                reports,
                gold_label,
                split,
            });
        }
    }
    Ok(Synthetic {
        config: cfg.clone(),
        corpus: Corpus::new(samples)?,
        hidden: HiddenLabels::new(hidden),
        lexicon: cfg.lexicon(),
    })
}

fn filler_words(rng: &mut impl Rng, table: &ZipfTable, len: (usize, usize)) -> Vec<String> {
    let n = rng.gen_range(len.0..=len.1);
    (0..n)
        .map(|_| SynthConfig::filler_token(table.sample(rng)))
        .collect()
}

fn filler_text(rng: &mut impl Rng, table: &ZipfTable, len: (usize, usize)) -> String {
    filler_words(rng, table, len).join(" ")
}

fn report_text(
    rng: &mut impl Rng,
    cfg: &SynthConfig,
    filler: &ZipfTable,
    signal: &ZipfTable,
    label: Label,
) -> String {
    let mut words = filler_words(rng, filler, cfg.report_len);
    if rng.gen_bool(cfg.signal_strength) {
        let class = if rng.gen_bool(cfg.cross_talk) {
            label.flip()
        } else {
            label
        };
        let rank = signal.sample(rng);
        let token = match class {
            Label::Fake => SynthConfig::fake_token(rank),
            Label::Real => SynthConfig::real_token(rank),
        };
        let pos = rng.gen_range(0..=words.len());
        words.insert(pos, token);
    }
    words.join(" ")
}
