//! Versioned binary checkpoints.
//!
//! Layout: magic `LNMTCKPT`, format version (u32 LE), header length (u64 LE),
//! JSON header, raw little-endian f64 tensor data in header order, then a
//! SHA-256 of everything before it.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::features::{EmotionLexicon, Vocab};
use crate::optim::OptimizerState;
use crate::trainer::{EpochRecord, GenerationRecord, TrainConfig};

pub const MAGIC: &[u8; 8] = b"LNMTCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
}

/// Everything needed to continue a run bitwise-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub rng: ChaCha8Rng,
    /// The network receiving optimizer updates.
    pub student: EncoderParams,
    /// EMA network; stage 2 only. Has no optimizer moments.
    pub teacher: Option<EncoderParams>,
    pub optimizer: OptimizerState,
    /// Validation loss of the shipped model, for tie-breaking.
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: Stage,
    pub config: TrainConfig,
    pub vocab: Vec<String>,
    pub lexicon: EmotionLexicon,
    /// The shipped model: best validation accuracy so far.
    pub model: EncoderParams,
    pub best_val_accuracy: Option<f64>,
    /// Completed epochs (stage 1) or generations (stage 2).
    pub epochs_done: usize,
    pub stage1_history: Vec<EpochRecord>,
    pub generations: Vec<GenerationRecord>,
    pub state: Option<TrainState>,
}

#[derive(Serialize, Deserialize)]
struct StateHeader {
    rng: ChaCha8Rng,
    optimizer_step: u64,
    best_val_loss: f64,
    has_teacher: bool,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    set: String,
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    stage: Stage,
    config: TrainConfig,
    vocab: Vec<String>,
    lexicon: EmotionLexicon,
    best_val_accuracy: Option<f64>,
    epochs_done: usize,
    stage1_history: Vec<EpochRecord>,
    generations: Vec<GenerationRecord>,
    state: Option<StateHeader>,
    tensors: Vec<TensorInfo>,
}

impl Checkpoint {
    /// Vocabulary whose vectors are the shipped model's embeddings.
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::from_parts(self.vocab.clone(), self.model.embedding.clone())
    }

    /// Same checkpoint without resumable state (smaller, not resumable).
    pub fn without_state(mut self) -> Self {
        self.state = None;
        self
    }

    fn param_sets(&self) -> Vec<(&'static str, &EncoderParams)> {
        let mut sets = vec![("model", &self.model)];
        if let Some(st) = &self.state {
            sets.push(("student", &st.student));
            if let Some(t) = &st.teacher {
                sets.push(("teacher", t));
            }
            sets.push(("adam_m", &st.optimizer.m));
            sets.push(("adam_v", &st.optimizer.v));
        }
        sets
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let sets = self.param_sets();
        let tensors = sets
            .iter()
            .flat_map(|(set, p)| {
                p.tensors().into_iter().map(move |(name, t)| TensorInfo {
                    set: set.to_string(),
                    name,
                    rows: t.rows(),
                    cols: t.cols(),
                })
            })
            .collect();
        let header = Header {
            stage: self.stage,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            lexicon: self.lexicon.clone(),
            best_val_accuracy: self.best_val_accuracy,
            epochs_done: self.epochs_done,
            stage1_history: self.stage1_history.clone(),
            generations: self.generations.clone(),
            state: self.state.as_ref().map(|st| StateHeader {
                rng: st.rng.clone(),
                optimizer_step: st.optimizer.step,
                best_val_loss: st.best_val_loss,
                has_teacher: st.teacher.is_some(),
            }),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 8 * self.model.n_parameters() * sets.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in &sets {
            for (_, t) in p.tensors() {
                for x in t.as_slice() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::Checkpoint(format!("corrupted checkpoint: {what}"));
        if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic or truncated"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| corrupt("header length"))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;
        let mut data = &body[header_end..];
        let mut infos = header.tensors.iter();
        let n_vocab = header.vocab.len();

        let mut read_set = |set: &str| -> Result<EncoderParams> {
            let mut p = EncoderParams::zeros(&header.config.model, n_vocab)?;
            for (name, t) in p.tensors_mut() {
                let info = infos.next().ok_or_else(|| corrupt("missing tensor"))?;
                if info.set != set || info.name != name || (info.rows, info.cols) != t.shape() {
                    return Err(corrupt(&format!("unexpected tensor {}.{}", info.set, info.name)));
                }
                let n = t.as_slice().len() * 8;
                if data.len() < n {
                    return Err(corrupt("truncated tensor data"));
                }
                for (x, chunk) in t.as_mut_slice().iter_mut().zip(data[..n].chunks_exact(8)) {
                    *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                }
                data = &data[n..];
            }
            Ok(p)
        };

        let model = read_set("model")?;
        let state = match header.state {
            None => None,
            Some(sh) => {
                let student = read_set("student")?;
                let teacher = if sh.has_teacher { Some(read_set("teacher")?) } else { None };
                let m = read_set("adam_m")?;
                let v = read_set("adam_v")?;
                Some(TrainState {
                    rng: sh.rng,
                    student,
                    teacher,
                    optimizer: OptimizerState {
                        m,
                        v,
                        step: sh.optimizer_step,
                    },
                    best_val_loss: sh.best_val_loss,
                })
            }
        };
        if !data.is_empty() || infos.next().is_some() {
            return Err(corrupt("trailing tensor data"));
        }
        Ok(Self {
            stage: header.stage,
            config: header.config,
            vocab: header.vocab,
            lexicon: header.lexicon,
            model,
            best_val_accuracy: header.best_val_accuracy,
            epochs_done: header.epochs_done,
            stage1_history: header.stage1_history,
            generations: header.generations,
            state,
        })
    }

    /// Writes atomically: a temporary sibling file is renamed into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
