//! Tokenization, word vectors, emotion features and per-sample encoding.

mod emotion;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use emotion::{
    aux, emotion_vector, EmotionLexicon, EmotionVector, LexiconEntry, AUX_OFFSET, EMOTION_DIM,
    N_AUX, N_LEXICON_CATEGORIES, SENTIMENT_SLOT,
};

use crate::corpus::{Corpus, Sample, Split};
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const UNK_STD: f64 = 0.02;

/// Splits on whitespace; runs of alphanumeric characters form words and
/// every other character is its own token. Case is preserved.
pub fn tokenize_raw(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Lowercased [`tokenize_raw`].
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_raw(text)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Token index plus one embedding row per index. Index 0 is `<pad>` with an
/// all-zero vector, index 1 is `<unk>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Mat,
}

impl Vocab {
    fn with_specials(dim: usize, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<f64>) {
        let normal = Normal::new(0.0, UNK_STD).expect("valid std");
        let mut data = vec![0.0; dim];
        data.extend((0..dim).map(|_| normal.sample(rng)));
        (vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()], data)
    }

    /// Builds a vocabulary from a token stream (first occurrence order) with
    /// vectors drawn from `N(0, init_std^2)`.
    pub fn from_tokens<I, S>(tokens: I, dim: usize, init_std: f64, seed: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut names, mut data) = Self::with_specials(dim, &mut rng);
        let normal = Normal::new(0.0, init_std)
            .map_err(|e| Error::Config(format!("embedding init std: {e}")))?;
        let mut index: HashMap<String, usize> =
            names.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for tok in tokens {
            let tok = tok.as_ref();
            if index.contains_key(tok) {
                continue;
            }
            index.insert(tok.to_string(), names.len());
            names.push(tok.to_string());
            data.extend((0..dim).map(|_| normal.sample(&mut rng)));
        }
        let rows = names.len();
        Ok(Self {
            tokens: names,
            index,
            vectors: Mat::from_vec(rows, dim, data),
        })
    }

    /// Vocabulary over all tokens of the given splits, in corpus order.
    pub fn from_corpus(
        corpus: &Corpus,
        splits: &[Split],
        dim: usize,
        init_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let tokens = corpus
            .samples()
            .iter()
            .filter(|s| splits.contains(&s.split))
            .flat_map(|s| {
                std::iter::once(&s.article)
                    .chain(s.reports.iter().map(|r| &r.text))
                    .flat_map(|t| tokenize(t))
            });
        Self::from_tokens(tokens, dim, init_std, seed)
    }

    /// Rebuilds a vocabulary from stored tokens and vectors (checkpoints).
    pub fn from_parts(tokens: Vec<String>, vectors: Mat) -> Result<Self> {
        if tokens.len() != vectors.rows() || tokens.len() < 2 {
            return Err(Error::Shape(format!(
                "{} tokens for {} vectors",
                tokens.len(),
                vectors.rows()
            )));
        }
        if tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Config("vocabulary must start with <pad>, <unk>".into()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            tokens,
            index,
            vectors,
        })
    }

    /// Replaces the vector of every token also present in `pretrained`
    /// (specials excluded). Returns how many rows were replaced.
    pub fn overlay(&mut self, pretrained: &Vocab) -> Result<usize> {
        if pretrained.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "pretrained dimension {} does not match {}",
                pretrained.dim(),
                self.dim()
            )));
        }
        let mut n = 0;
        for (i, tok) in self.tokens.iter().enumerate().skip(2) {
            if let Some(&j) = pretrained.index.get(tok) {
                if j > UNK {
                    self.vectors.row_mut(i).copy_from_slice(pretrained.vectors.row(j));
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }
}

/// Writes vectors in word2vec text format (`count dim` header), skipping
/// the special tokens. Values use shortest round-trip formatting.
pub fn write_embeddings(vocab: &Vocab, mut writer: impl std::io::Write) -> std::io::Result<()> {
    writeln!(writer, "{} {}", vocab.len() - 2, vocab.dim())?;
    for (i, tok) in vocab.tokens().iter().enumerate().skip(2) {
        write!(writer, "{tok}")?;
        for v in vocab.vectors().row(i) {
            write!(writer, " {v}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Loads whitespace-separated word vectors (`token v1 ... v_d`), keeping at
/// most `vocab_limit` entries. A leading `count dim` header line is skipped.
pub fn load_embeddings(path: impl AsRef<Path>, vocab_limit: usize, seed: u64) -> Result<Vocab> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim: Option<usize> = None;
    let mut tokens = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(tok) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if line_no == 1
            && values.len() == 1
            && tok.parse::<usize>().is_ok()
            && values[0].parse::<usize>().is_ok()
        {
            continue;
        }
        let bad = |reason: String| Error::MalformedLine {
            line: line_no,
            reason,
        };
        let vec: Vec<f64> = values
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad float '{v}'"))))
            .collect::<Result<_>>()?;
        if vec.is_empty() {
            return Err(bad("embedding dimension must be positive".into()));
        }
        match dim {
            None => dim = Some(vec.len()),
            Some(d) if d != vec.len() => {
                return Err(bad(format!("expected {d} values, found {}", vec.len())));
            }
            _ => {}
        }
        if tokens.len() >= vocab_limit {
            break;
        }
        tokens.push(tok.to_string());
        rows.extend(vec);
    }
    let dim = dim.ok_or_else(|| Error::Config(format!("{}: no vectors", path.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut names, mut data) = Vocab::with_specials(dim, &mut rng);
    let mut seen: HashMap<String, usize> =
        names.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    for (i, tok) in tokens.into_iter().enumerate() {
        if seen.contains_key(&tok) {
            continue;
        }
        seen.insert(tok.clone(), names.len());
        names.push(tok);
        data.extend_from_slice(&rows[i * dim..(i + 1) * dim]);
    }
    let n = names.len();
    Vocab::from_parts(names, Mat::from_vec(n, dim, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeLimits {
    pub max_tokens: usize,
    pub max_sequences: usize,
}

impl Default for EncodeLimits {
    fn default() -> Self {
        Self {
            max_tokens: 40,
            max_sequences: 100,
        }
    }
}

/// One sample as model input: row 0 is the article, rows 1.. the reports.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    max_tokens: usize,
    /// `n_sequences x max_tokens`, padded with [`PAD`].
    token_ids: Vec<u32>,
    lengths: Vec<usize>,
    /// `n_sequences x EMOTION_DIM`.
    pub emotion: Mat,
}

impl EncodedSample {
    /// Builds an encoded sample directly from index sequences (tests, tools).
    /// Empty sequences become a single `<pad>` position.
    pub fn from_ids(seqs: &[Vec<usize>], emotion: Mat, max_tokens: usize) -> Self {
        assert_eq!(emotion.rows(), seqs.len());
        assert_eq!(emotion.cols(), EMOTION_DIM);
        let mut token_ids = vec![PAD as u32; seqs.len() * max_tokens];
        let mut lengths = Vec::with_capacity(seqs.len());
        for (i, s) in seqs.iter().enumerate() {
            let n = s.len().min(max_tokens);
            for (j, &id) in s.iter().take(n).enumerate() {
                token_ids[i * max_tokens + j] = id as u32;
            }
            lengths.push(n.max(1));
        }
        Self {
            max_tokens,
            token_ids,
            lengths,
            emotion,
        }
    }

    pub fn n_sequences(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    /// Attended positions of sequence `i` (at least one).
    pub fn len_of(&self, i: usize) -> usize {
        self.lengths[i]
    }

    /// Token ids of sequence `i`, true length only.
    pub fn ids(&self, i: usize) -> &[u32] {
        let start = i * self.max_tokens;
        &self.token_ids[start..start + self.lengths[i]]
    }

    /// Full padded row of sequence `i`.
    pub fn padded_row(&self, i: usize) -> &[u32] {
        &self.token_ids[i * self.max_tokens..(i + 1) * self.max_tokens]
    }

    /// `mask[i][j]` is true for attended positions, false for padding.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.lengths
            .iter()
            .map(|&n| (0..self.max_tokens).map(|j| j < n).collect())
            .collect()
    }
}

/// Encodes a sample: article first, then reports in corpus order, keeping
/// the first `max_tokens` tokens of each text and the first
/// `max_sequences - 1` reports.
pub fn encode_sample(
    sample: &Sample,
    vocab: &Vocab,
    lex: &EmotionLexicon,
    limits: EncodeLimits,
) -> EncodedSample {
    let texts = std::iter::once(sample.article.as_str())
        .chain(sample.reports.iter().map(|r| r.text.as_str()))
        .take(limits.max_sequences.max(1));
    let mut seqs = Vec::new();
    let mut emo_rows = Vec::new();
    for text in texts {
        let mut raw = tokenize_raw(text);
        raw.truncate(limits.max_tokens);
        emo_rows.extend_from_slice(emotion_vector(&raw, lex).as_slice());
        seqs.push(
            raw.iter()
                .map(|t| vocab.lookup(&t.to_lowercase()))
                .collect::<Vec<_>>(),
        );
    }
    let n = seqs.len();
    EncodedSample::from_ids(&seqs, Mat::from_vec(n, EMOTION_DIM, emo_rows), limits.max_tokens)
}
