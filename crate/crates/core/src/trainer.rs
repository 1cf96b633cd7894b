//! Two-stage training: supervised pre-training on the labeled split, then
//! teacher/student refinement over the unlabeled split.
//!
//! Randomness comes from three independently seeded sources: the vocabulary
//! initializer (`seed`), the parameter initializer (`seed` mixed with a
//! constant), and one ChaCha stream per stage that drives, in order, the
//! epoch shuffles and then per-sample dropout masks. Perturbed reliability
//! passes use a separate stream reseeded each generation.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Stage, TrainState};
use crate::data::{Dataset, EncodedSplit};
use crate::encoder::{
    backward_logit_into, bce_grad_logit, bce_loss, forward_train, init_params, predict, EncoderParams, ModelConfig,
};
use crate::error::{Error, Result};
use crate::features::EncodedSample;
use crate::meanteacher::{
    ema_update, refine_from_outputs, refresh_predictions, refresh_predictions_perturbed, LabelSimilarityMatrix, RefineOptions, ReliabilityMode,
    WeakLabelAccuracy, WeakLabelState,
};
use crate::optim::{adam_step, clip_global_norm, AdamConfig, LrSchedule, OptimizerState};

const PARAM_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
const STAGE1_STREAM: u64 = 1;
const STAGE2_STREAM: u64 = 2;
/// Dropout masks of perturbed reliability passes; reseeded per generation so
/// that ablations without it see the same training stream.
const PERTURB_STREAM: u64 = 3;
/// Warmup fraction used when the configured warmup exceeds the run length.
pub const SCALED_WARMUP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub warmup_iters: u64,
    pub peak_lr: f64,
    pub floor_lr: f64,
    /// Shrink the warmup to a fifth of the run when the run is shorter
    /// than `warmup_iters`.
    pub scale_warmup: bool,
    pub clip_norm: Option<f64>,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch: 48,
            adam: AdamConfig::default(),
            warmup_iters: 8000,
            peak_lr: 3e-5,
            floor_lr: 3e-7,
            scale_warmup: true,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    /// Number of generations `T`.
    pub generations: usize,
    pub batch: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    /// EMA momentum.
    pub alpha: f64,
    /// Label propagation rate.
    pub beta: f64,
    /// Kernel bandwidth of the reliability measure.
    pub sigma: f64,
    pub clip_norm: Option<f64>,
    pub use_lp: bool,
    pub use_lr: bool,
    pub reliability: ReliabilityMode,
    /// Compute reliability from dropout-perturbed passes of both networks
    /// (no effect when the model has no dropout).
    pub perturbed_reliability: bool,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            generations: 15,
            batch: 64,
            lr: 2e-6,
            adam: AdamConfig::default(),
            alpha: 0.999,
            beta: 0.9,
            sigma: 1.0,
            clip_norm: Some(5.0),
            use_lp: true,
            use_lr: true,
            reliability: ReliabilityMode::ClassLikelihood,
            perturbed_reliability: false,
        }
    }
}

impl Stage2Config {
    pub fn refine_options(&self) -> RefineOptions {
        RefineOptions {
            beta: self.beta,
            sigma: self.sigma,
            use_lp: self.use_lp,
            use_lr: self.use_lr,
            reliability: self.reliability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub seed: u64,
    /// Stage-1 validation interval in epochs.
    pub eval_every: usize,
    /// Standard deviation of randomly initialized word vectors.
    pub embedding_std: f64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::full(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            seed: 0,
            eval_every: 1,
            embedding_std: 1.0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// Small model and short schedules sized for the default synthetic
    /// corpus on one CPU core.
    pub fn desk(seed: u64) -> Self {
        Self {
            model: ModelConfig::desk(),
            stage1: Stage1Config {
                epochs: 30,
                batch: 16,
                peak_lr: 2e-3,
                floor_lr: 1e-4,
                ..Stage1Config::default()
            },
            stage2: Stage2Config {
                generations: 10,
                batch: 32,
                lr: 3e-3,
                alpha: 0.95,
                perturbed_reliability: true,
                ..Stage2Config::default()
            },
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let s1 = &self.stage1;
        let s2 = &self.stage2;
        if s1.batch == 0 || s2.batch == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if !(s1.peak_lr > 0.0 && s1.floor_lr > 0.0 && s2.lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        for (name, v) in [("alpha", s2.alpha), ("beta", s2.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(s2.sigma > 0.0) {
            return Err(Error::Config(format!("sigma {} must be > 0", s2.sigma)));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if let Some(c) = s1.clip_norm.into_iter().chain(s2.clip_norm).find(|c| !(*c > 0.0)) {
            return Err(Error::Config(format!("clip norm {c} must be > 0")));
        }
        Ok(())
    }

    /// Learning-rate schedule for a training split of `n_train` samples.
    pub fn stage1_schedule(&self, n_train: usize) -> Result<LrSchedule> {
        let s = &self.stage1;
        let total = (s.epochs * n_train.div_ceil(s.batch)) as u64;
        let mut warmup = s.warmup_iters;
        if s.scale_warmup && total < warmup {
            warmup = (total as f64 * SCALED_WARMUP_FRACTION).round() as u64;
            log::info!("run has {total} iterations; warmup rescaled to {warmup}");
        }
        LrSchedule::new(warmup, total, s.peak_lr, s.floor_lr)
    }
}

/// Stage-1 per-epoch log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

/// Stage-2 per-generation log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub step: u64,
    pub similarity: LabelSimilarityMatrix,
    pub mean_omega: f64,
    pub center_fallback: [[bool; 2]; 2],
    /// Refined weak labels against hidden truth, when available.
    pub weak_label_accuracy: Option<WeakLabelAccuracy>,
    /// Mean credibility of correctly and wrongly weak-labeled samples.
    pub omega_by_correctness: Option<[Option<f64>; 2]>,
    pub loss_labeled: f64,
    pub loss_unlabeled: f64,
    pub teacher_val_accuracy: Option<f64>,
    pub teacher_val_loss: Option<f64>,
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(records: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fake-probabilities of `model` on every sample.
pub fn predict_split(model: &EncoderParams, samples: &[EncodedSample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| predict(s, model).map(|p| p.p)).collect()
}

/// Accuracy and mean BCE on a labeled split; `None` if it is empty.
pub fn evaluate_split(model: &EncoderParams, split: &EncodedSplit) -> Result<Option<(f64, f64)>> {
    if split.is_empty() {
        return Ok(None);
    }
    let gold = split.gold()?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (s, y) in split.samples.iter().zip(&gold) {
        let p = predict(s, model)?.p;
        if (p >= 0.5) == (y.as_f64() == 1.0) {
            correct += 1;
        }
        loss += bce_loss(p, y.as_f64())?;
    }
    let n = split.len() as f64;
    Ok(Some((correct as f64 / n, loss / n)))
}

fn zero(grads: &mut EncoderParams) {
    for (_, t) in grads.tensors_mut() {
        t.fill(0.0);
    }
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_vocab(data: &Dataset, ckpt: &Checkpoint) -> Result<()> {
    if data.vocab.tokens() != ckpt.vocab.as_slice() {
        return Err(Error::Config("dataset vocabulary differs from the checkpoint's".into()));
    }
    Ok(())
}

/// `true` if `(acc, loss)` beats the current best: higher accuracy, ties
/// going to lower loss.
fn improves(acc: f64, loss: f64, best_acc: Option<f64>, best_loss: f64) -> bool {
    match best_acc {
        None => true,
        Some(b) => acc > b || (acc == b && loss < best_loss),
    }
}

/// Freshly initialized stage-1 run, zero epochs done.
pub fn init_stage1(data: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::Config("labeled training split is empty".into()));
    }
    let params = init_params(&cfg.model, &data.vocab, cfg.seed ^ PARAM_SEED_MIX)?;
    Ok(Checkpoint {
        stage: Stage::Stage1,
        config: cfg.clone(),
        vocab: data.vocab.tokens().to_vec(),
        lexicon: data.lexicon.clone(),
        model: params.clone(),
        best_val_accuracy: None,
        epochs_done: 0,
        stage1_history: Vec::new(),
        generations: Vec::new(),
        state: Some(TrainState {
            rng: stage_rng(cfg.seed, STAGE1_STREAM),
            optimizer: OptimizerState::new(&params),
            student: params,
            teacher: None,
            best_val_loss: f64::MAX,
        }),
    })
}

/// Continues a stage-1 run until `until_epoch` (or the configured total).
/// The returned checkpoint ships the best-validation model and can be
/// resumed again.
pub fn run_stage1(data: &Dataset, mut ckpt: Checkpoint, until_epoch: Option<usize>) -> Result<Checkpoint> {
    if ckpt.stage != Stage::Stage1 {
        return Err(Error::Checkpoint("expected a stage-1 checkpoint".into()));
    }
    check_vocab(data, &ckpt)?;
    let cfg = ckpt.config.clone();
    let s1 = &cfg.stage1;
    let schedule = cfg.stage1_schedule(data.train.len())?;
    let gold: Vec<f64> = data.train.gold()?.iter().map(|l| l.as_f64()).collect();
    let mut st = ckpt
        .state
        .take()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no training state to resume".into()))?;
    let mut grads = st.student.zeros_like();
    let end = until_epoch.unwrap_or(s1.epochs).min(s1.epochs);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in ckpt.epochs_done..end {
        order.sort_unstable();
        order.shuffle(&mut st.rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(s1.batch) {
            zero(&mut grads);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let trace = forward_train(&data.train.samples[i], &st.student, &mut st.rng)?;
                loss_sum += bce_loss(trace.p, gold[i])?;
                let dlogit = bce_grad_logit(trace.p, gold[i])? * scale;
                backward_logit_into(&st.student, &trace, dlogit, &mut grads)?;
            }
            if let Some(c) = s1.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            lr = schedule.at(st.optimizer.step + 1);
            adam_step(&mut st.student, &grads, &mut st.optimizer, lr, &s1.adam)?;
        }
        let last = epoch + 1 == s1.epochs;
        let (val_accuracy, val_loss) = if (epoch + 1) % cfg.eval_every == 0 || last {
            match evaluate_split(&st.student, &data.val)? {
                Some((acc, loss)) => {
                    if improves(acc, loss, ckpt.best_val_accuracy, st.best_val_loss) {
                        ckpt.model = st.student.clone();
                        ckpt.best_val_accuracy = Some(acc);
                        st.best_val_loss = loss;
                    }
                    (Some(acc), Some(loss))
                }
                None => {
                    ckpt.model = st.student.clone();
                    (None, None)
                }
            }
        } else {
            (None, None)
        };
        let record = EpochRecord {
            epoch,
            step: st.optimizer.step,
            lr,
            train_loss: loss_sum / data.train.len() as f64,
            val_accuracy,
            val_loss,
        };
        log::debug!("stage1 {record:?}");
        ckpt.stage1_history.push(record);
        ckpt.epochs_done = epoch + 1;
    }
    ckpt.state = Some(st);
    Ok(ckpt)
}

/// Full stage-1 run.
pub fn train_stage1(data: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    run_stage1(data, init_stage1(data, cfg)?, None)
}

/// Stage-2 run starting from a finished stage-1 checkpoint. The model
/// config is taken from `stage1`; everything else from `cfg`.
pub fn init_stage2(data: &Dataset, stage1: &Checkpoint, cfg: &TrainConfig) -> Result<Checkpoint> {
    if stage1.stage != Stage::Stage1 {
        return Err(Error::Checkpoint("stage 2 must start from a stage-1 checkpoint".into()));
    }
    check_vocab(data, stage1)?;
    let mut config = cfg.clone();
    config.model = stage1.config.model.clone();
    config.validate()?;
    let model = stage1.model.clone();
    Ok(Checkpoint {
        stage: Stage::Stage2,
        config,
        vocab: stage1.vocab.clone(),
        lexicon: stage1.lexicon.clone(),
        best_val_accuracy: None,
        epochs_done: 0,
        stage1_history: stage1.stage1_history.clone(),
        generations: Vec::new(),
        state: Some(TrainState {
            rng: stage_rng(cfg.seed, STAGE2_STREAM),
            optimizer: OptimizerState::new(&model),
            student: model.clone(),
            teacher: Some(model.clone()),
            best_val_loss: f64::MAX,
        }),
        model,
    })
}

/// Continues a stage-2 run until `until_generation` (or the configured
/// total). The shipped model is the teacher with the best validation
/// accuracy.
pub fn run_stage2(data: &Dataset, mut ckpt: Checkpoint, until_generation: Option<usize>) -> Result<Checkpoint> {
    if ckpt.stage != Stage::Stage2 {
        return Err(Error::Checkpoint("expected a stage-2 checkpoint".into()));
    }
    check_vocab(data, &ckpt)?;
    let cfg = ckpt.config.clone();
    let s2 = &cfg.stage2;
    let opts = s2.refine_options();
    let gold: Vec<f64> = data.train.gold()?.iter().map(|l| l.as_f64()).collect();
    let mut st = ckpt
        .state
        .take()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no training state to resume".into()))?;
    let mut teacher = st
        .teacher
        .take()
        .ok_or_else(|| Error::Checkpoint("stage-2 state has no teacher".into()))?;
    let mut grads = st.student.zeros_like();
    let end = until_generation.unwrap_or(s2.generations).min(s2.generations);
    let n_u = data.unlabeled.len();
    let n_l = data.train.len();
    let steps = if n_u > 0 { n_u.div_ceil(s2.batch) } else { n_l.div_ceil(s2.batch) };
    let mut weak = WeakLabelState::default();
    let mut u_order: Vec<usize> = (0..n_u).collect();
    let mut l_order: Vec<usize> = (0..n_l).collect();

    for generation in ckpt.epochs_done..end {
        let t_out = refresh_predictions(&teacher, &data.unlabeled.samples)?;
        let s_out = refresh_predictions(&st.student, &data.unlabeled.samples)?;
        let perturbed = if s2.perturbed_reliability && s2.use_lr && cfg.model.dropout > 0.0 {
            let mut rng = stage_rng(cfg.seed.wrapping_add(generation as u64), PERTURB_STREAM);
            Some((
                refresh_predictions_perturbed(&teacher, &data.unlabeled.samples, &mut rng)?,
                refresh_predictions_perturbed(&st.student, &data.unlabeled.samples, &mut rng)?,
            ))
        } else {
            None
        };
        let summary = refine_from_outputs(
            &t_out,
            &s_out,
            perturbed.as_ref().map(|(t, s)| (t, s)),
            &mut weak,
            &opts,
            data.unlabeled_truth.as_deref(),
        )?;

        u_order.sort_unstable();
        u_order.shuffle(&mut st.rng);
        l_order.sort_unstable();
        l_order.shuffle(&mut st.rng);
        let mut l_cursor = 0;
        let (mut loss_l, mut loss_u) = (0.0, 0.0);
        let (mut seen_l, mut seen_u) = (0usize, 0usize);
        for step in 0..steps {
            zero(&mut grads);
            let u_batch = &u_order[(step * s2.batch).min(n_u)..((step + 1) * s2.batch).min(n_u)];
            // Equal labeled and unlabeled batch sizes; the labeled split is cycled.
            let l_len = match (n_l, n_u) {
                (0, _) => 0,
                (_, 0) => s2.batch.min(n_l),
                _ => u_batch.len(),
            };
            let mut l_batch = Vec::with_capacity(l_len);
            while l_batch.len() < l_len {
                if l_cursor == n_l {
                    l_order.shuffle(&mut st.rng);
                    l_cursor = 0;
                }
                l_batch.push(l_order[l_cursor]);
                l_cursor += 1;
            }
            for &i in &l_batch {
                let trace = forward_train(&data.train.samples[i], &st.student, &mut st.rng)?;
                loss_l += bce_loss(trace.p, gold[i])?;
                let dlogit = bce_grad_logit(trace.p, gold[i])? / l_batch.len() as f64;
                backward_logit_into(&st.student, &trace, dlogit, &mut grads)?;
            }
            seen_l += l_batch.len();
            for &i in u_batch {
                let trace = forward_train(&data.unlabeled.samples[i], &st.student, &mut st.rng)?;
                let (y, w) = (weak.y_u[i], weak.omega[i]);
                loss_u += w * bce_loss(trace.p, y)?;
                let dlogit = w * bce_grad_logit(trace.p, y)? / u_batch.len() as f64;
                backward_logit_into(&st.student, &trace, dlogit, &mut grads)?;
            }
            seen_u += u_batch.len();
            if let Some(c) = s2.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam_step(&mut st.student, &grads, &mut st.optimizer, s2.lr, &s2.adam)?;
            ema_update(&mut teacher, &st.student, s2.alpha)?;
        }

        let eval = evaluate_split(&teacher, &data.val)?;
        match eval {
            Some((acc, loss)) => {
                if improves(acc, loss, ckpt.best_val_accuracy, st.best_val_loss) {
                    ckpt.model = teacher.clone();
                    ckpt.best_val_accuracy = Some(acc);
                    st.best_val_loss = loss;
                }
            }
            None => ckpt.model = teacher.clone(),
        }
        let record = GenerationRecord {
            generation,
            step: st.optimizer.step,
            similarity: summary.similarity,
            mean_omega: summary.mean_omega,
            center_fallback: summary.center_fallback,
            weak_label_accuracy: summary.weak_label_accuracy,
            omega_by_correctness: summary.omega_by_correctness,
            loss_labeled: if seen_l > 0 { loss_l / seen_l as f64 } else { 0.0 },
            loss_unlabeled: if seen_u > 0 { loss_u / seen_u as f64 } else { 0.0 },
            teacher_val_accuracy: eval.map(|e| e.0),
            teacher_val_loss: eval.map(|e| e.1),
        };
        log::debug!("stage2 {record:?}");
        ckpt.generations.push(record);
        ckpt.epochs_done = generation + 1;
    }
    st.teacher = Some(teacher);
    ckpt.state = Some(st);
    Ok(ckpt)
}

/// Full stage-2 run from a stage-1 checkpoint.
pub fn train_stage2(data: &Dataset, stage1: &Checkpoint, cfg: &TrainConfig) -> Result<Checkpoint> {
    run_stage2(data, init_stage2(data, stage1, cfg)?, None)
}
