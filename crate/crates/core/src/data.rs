//! Corpus splits encoded once into model inputs.

use crate::corpus::{Corpus, HiddenLabels, Label, Split};
use crate::error::{Error, Result};
use crate::features::{encode_sample, EmotionLexicon, EncodeLimits, EncodedSample, Vocab};

/// One split, in corpus order.
#[derive(Debug, Clone, Default)]
pub struct EncodedSplit {
    pub ids: Vec<String>,
    pub samples: Vec<EncodedSample>,
    /// Gold labels; `None` throughout for the unlabeled split.
    pub labels: Vec<Option<Label>>,
}

impl EncodedSplit {
    pub fn encode(corpus: &Corpus, split: Split, vocab: &Vocab, lex: &EmotionLexicon, limits: EncodeLimits) -> Self {
        let mut out = Self::default();
        for s in corpus.split(split) {
            out.ids.push(s.id.clone());
            out.samples.push(encode_sample(s, vocab, lex, limits));
            out.labels.push(s.gold_label);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// All gold labels, or an error naming the first unlabeled sample.
    pub fn gold(&self) -> Result<Vec<Label>> {
        self.labels
            .iter()
            .zip(&self.ids)
            .map(|(l, id)| l.ok_or_else(|| Error::Config(format!("sample {id} has no gold label"))))
            .collect()
    }
}

/// Everything the trainer reads: vocabulary, lexicon and the four encoded
/// splits. Hidden truth for unlabeled samples is kept apart and only used
/// for diagnostics.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocab,
    pub lexicon: EmotionLexicon,
    pub train: EncodedSplit,
    pub val: EncodedSplit,
    pub test: EncodedSplit,
    pub unlabeled: EncodedSplit,
    pub unlabeled_truth: Option<Vec<Label>>,
}

impl Dataset {
    /// Builds the vocabulary from the train and unlabeled splits, then
    /// encodes every split. Words found in `pretrained` take its vectors;
    /// the rest are drawn from `N(0, embedding_std^2)`.
    pub fn build(
        corpus: &Corpus,
        lexicon: EmotionLexicon,
        pretrained: Option<&Vocab>,
        dim: usize,
        embedding_std: f64,
        limits: EncodeLimits,
        seed: u64,
    ) -> Result<Self> {
        let mut vocab = Vocab::from_corpus(corpus, &[Split::Train, Split::Unlabeled], dim, embedding_std, seed)?;
        if let Some(p) = pretrained {
            let n = vocab.overlay(p)?;
            log::info!("{n} of {} words initialized from pretrained vectors", vocab.len() - 2);
        }
        Ok(Self::with_vocab(corpus, vocab, lexicon, limits))
    }

    pub fn with_vocab(corpus: &Corpus, vocab: Vocab, lexicon: EmotionLexicon, limits: EncodeLimits) -> Self {
        let enc = |split| EncodedSplit::encode(corpus, split, &vocab, &lexicon, limits);
        let (train, val, test, unlabeled) = (
            enc(Split::Train),
            enc(Split::Val),
            enc(Split::Test),
            enc(Split::Unlabeled),
        );
        Self {
            vocab,
            lexicon,
            train,
            val,
            test,
            unlabeled,
            unlabeled_truth: None,
        }
    }

    /// Attaches hidden labels for unlabeled samples. Ignored unless every
    /// unlabeled sample has one.
    pub fn attach_hidden(&mut self, hidden: &HiddenLabels) {
        self.unlabeled_truth = self.unlabeled.ids.iter().map(|id| hidden.get(id)).collect();
    }

    pub fn split(&self, split: Split) -> &EncodedSplit {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
            Split::Unlabeled => &self.unlabeled,
        }
    }
}
