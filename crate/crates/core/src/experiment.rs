//! Multi-seed experiments on synthetic corpora: the component ablation
//! (stage 1, mean teacher, + propagation, + reliability), the emotion
//! ablation, and hyperparameter sweeps.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::corpus::{generate_synthetic, write_corpus, Corpus, Split, SynthConfig, Synthetic};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::trainer::{predict_split, train_stage1, train_stage2, TrainConfig};

/// Published full-scale test accuracies (percent) of the four ablation
/// variants, in [`Variant::ALL`] order. Informational only.
pub const REFERENCE_ACCURACY: [f64; 4] = [78.7, 79.5, 80.8, 82.6];
/// Published stage-1 accuracies (percent) without and with emotion features.
pub const REFERENCE_EMOTION_ACCURACY: [f64; 2] = [77.4, 78.7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Stage1,
    MeanTeacher,
    MeanTeacherLp,
    MeanTeacherLpLr,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Stage1,
        Variant::MeanTeacher,
        Variant::MeanTeacherLp,
        Variant::MeanTeacherLpLr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Stage1 => "stage1",
            Variant::MeanTeacher => "mt",
            Variant::MeanTeacherLp => "mt+lp",
            Variant::MeanTeacherLpLr => "mt+lp+lr",
        }
    }

    /// `(use_lp, use_lr)`; `None` for stage 1.
    fn switches(self) -> Option<(bool, bool)> {
        match self {
            Variant::Stage1 => None,
            Variant::MeanTeacher => Some((false, false)),
            Variant::MeanTeacherLp => Some((true, false)),
            Variant::MeanTeacherLpLr => Some((true, true)),
        }
    }
}

/// SHA-256 of the corpus in its JSONL serialization, hex encoded.
pub fn corpus_hash(corpus: &Corpus) -> Result<String> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf)?;
    Ok(Sha256::digest(&buf).iter().map(|b| format!("{b:02x}")).collect())
}

/// Encodes a synthetic corpus for `cfg`, initializing word vectors from the
/// generator's stand-in pretrained vectors and attaching hidden labels.
pub fn prepare_synthetic(syn: &Synthetic, cfg: &TrainConfig) -> Result<Dataset> {
    let pretrained = syn.config.word_vectors(cfg.model.d_model)?;
    let mut data = Dataset::build(
        &syn.corpus,
        syn.lexicon.clone(),
        Some(&pretrained),
        cfg.model.d_model,
        cfg.embedding_std,
        cfg.model.limits,
        cfg.seed,
    )?;
    data.attach_hidden(&syn.hidden);
    Ok(data)
}

/// Metrics of the checkpoint's shipped model on one labeled split of
/// `corpus`. Words outside the checkpoint vocabulary map to `<unk>`.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, corpus: &Corpus, split: Split) -> Result<MetricsReport> {
    let data = Dataset::with_vocab(corpus, ckpt.vocab()?, ckpt.lexicon.clone(), ckpt.config.model.limits);
    let s = data.split(split);
    if s.is_empty() {
        return Err(Error::Config(format!("split {split} is empty")));
    }
    let scores = predict_split(&ckpt.model, &s.samples)?;
    compute_metrics(&scores, &s.gold()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub test: MetricsReport,
    /// Soft weak-label accuracy after each generation's refinement.
    pub weak_label_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub corpus_sha256: String,
    /// Fraction of stage-1 hard weak labels that disagree with hidden truth.
    pub initial_weak_label_error: Option<f64>,
    pub variants: Vec<VariantResult>,
    /// Stage-1 test metrics with the emotion branch disabled.
    pub stage1_without_emotion: Option<MetricsReport>,
}

impl SeedResult {
    pub fn accuracy(&self, v: Variant) -> Option<f64> {
        self.variants.iter().find(|r| r.variant == v).map(|r| r.test.accuracy)
    }

    pub fn variant(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

/// Mean and sample standard deviation, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stddev: f64,
}

impl Summary {
    pub fn of(fractions: &[f64]) -> Self {
        let n = fractions.len() as f64;
        let mean = fractions.iter().sum::<f64>() / n;
        let var = if fractions.len() > 1 {
            fractions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean: 100.0 * mean,
            stddev: 100.0 * var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub accuracy: Summary,
    pub reference_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionSummary {
    pub with_emotion: Summary,
    pub without_emotion: Summary,
    pub reference_accuracy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOptions {
    /// Corpus template; its seed is replaced per run.
    pub corpus: SynthConfig,
    /// Training template; its seed is replaced per run.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub emotion_ablation: bool,
}

impl AblationOptions {
    pub fn desk(seeds: Vec<u64>) -> Self {
        Self {
            corpus: SynthConfig::benchmark(0),
            train: TrainConfig::desk(0),
            seeds,
            emotion_ablation: true,
        }
    }
}

/// Everything needed to reproduce and judge an ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub options: AblationOptions,
    pub per_seed: Vec<SeedResult>,
    pub summary: Vec<VariantSummary>,
    pub emotion: Option<EmotionSummary>,
}

impl RunManifest {
    pub fn summary_of(&self, v: Variant) -> Option<Summary> {
        self.summary.iter().find(|s| s.variant == v).map(|s| s.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

fn test_metrics(ckpt: &Checkpoint, data: &Dataset) -> Result<MetricsReport> {
    let scores = predict_split(&ckpt.model, &data.test.samples)?;
    compute_metrics(&scores, &data.test.gold()?)
}

/// One seed of the ablation: a corpus, a stage-1 model, and one stage-2 run
/// per variant, all from the same stage-1 checkpoint.
pub fn run_seed(opts: &AblationOptions, seed: u64) -> Result<SeedResult> {
    let syn = generate_synthetic(&SynthConfig {
        seed,
        ..opts.corpus.clone()
    })?;
    let cfg = TrainConfig {
        seed,
        ..opts.train.clone()
    };
    let data = prepare_synthetic(&syn, &cfg)?;
    let stage1 = train_stage1(&data, &cfg)?;
    let mut variants = Vec::new();
    let mut initial_weak_label_error = None;
    for v in Variant::ALL {
        let result = match v.switches() {
            None => VariantResult {
                variant: v,
                test: test_metrics(&stage1, &data)?,
                weak_label_accuracy: Vec::new(),
            },
            Some((lp, lr)) => {
                let mut c = cfg.clone();
                c.stage2.use_lp = lp;
                c.stage2.use_lr = lr;
                let s2 = train_stage2(&data, &stage1, &c)?;
                if let Some(w) = s2.generations.first().and_then(|g| g.weak_label_accuracy) {
                    initial_weak_label_error = Some(1.0 - w.hard);
                }
                VariantResult {
                    variant: v,
                    test: test_metrics(&s2, &data)?,
                    weak_label_accuracy: s2
                        .generations
                        .iter()
                        .filter_map(|g| g.weak_label_accuracy.map(|w| w.soft))
                        .collect(),
                }
            }
        };
        log::info!("seed {seed} {}: test accuracy {:.4}", v.name(), result.test.accuracy);
        variants.push(result);
    }
    let stage1_without_emotion = if opts.emotion_ablation {
        let mut c = cfg.clone();
        c.model.use_emotion = false;
        Some(test_metrics(&train_stage1(&data, &c)?, &data)?)
    } else {
        None
    };
    Ok(SeedResult {
        seed,
        corpus_sha256: corpus_hash(&syn.corpus)?,
        initial_weak_label_error,
        variants,
        stage1_without_emotion,
    })
}

pub fn run_ablation_suite(opts: &AblationOptions) -> Result<RunManifest> {
    if opts.seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let per_seed = opts.seeds.iter().map(|&s| run_seed(opts, s)).collect::<Result<Vec<_>>>()?;
    let summary = Variant::ALL
        .iter()
        .zip(REFERENCE_ACCURACY)
        .map(|(&v, reference_accuracy)| VariantSummary {
            variant: v,
            accuracy: Summary::of(&per_seed.iter().filter_map(|r| r.accuracy(v)).collect::<Vec<_>>()),
            reference_accuracy,
        })
        .collect();
    let emotion = opts.emotion_ablation.then(|| {
        let without: Vec<f64> = per_seed
            .iter()
            .filter_map(|r| r.stage1_without_emotion.as_ref().map(|m| m.accuracy))
            .collect();
        let with: Vec<f64> = per_seed.iter().filter_map(|r| r.accuracy(Variant::Stage1)).collect();
        EmotionSummary {
            with_emotion: Summary::of(&with),
            without_emotion: Summary::of(&without),
            reference_accuracy: REFERENCE_EMOTION_ACCURACY,
        }
    });
    Ok(RunManifest {
        options: opts.clone(),
        per_seed,
        summary,
        emotion,
    })
}

/// Values to try on each axis. An empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p_sig: Vec<f64>,
    /// Generator cross-talk: fraction of signal tokens drawn from the wrong
    /// class, which is what makes stage-1 weak labels noisy.
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub p_sig: f64,
    pub noise: f64,
    pub stage1_accuracy: Summary,
    pub accuracy: Summary,
}

fn axis(values: &[f64], base: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Full-method test accuracy over the grid. Corpus and stage-1 model are
/// shared by all stage-2 settings with the same corpus parameters.
pub fn sweep(base: &AblationOptions, grid: &SweepGrid) -> Result<Vec<SweepPoint>> {
    if base.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let s2 = &base.train.stage2;
    let (alphas, betas, sigmas) = (
        axis(&grid.alpha, s2.alpha),
        axis(&grid.beta, s2.beta),
        axis(&grid.sigma, s2.sigma),
    );
    let mut out = Vec::new();
    for &p_sig in &axis(&grid.p_sig, base.corpus.signal_strength) {
        for &noise in &axis(&grid.noise, base.corpus.cross_talk) {
            let n_inner = alphas.len() * betas.len() * sigmas.len();
            let mut stage1_acc = Vec::new();
            let mut acc = vec![Vec::new(); n_inner];
            for &seed in &base.seeds {
                let syn = generate_synthetic(&SynthConfig {
                    seed,
                    signal_strength: p_sig,
                    cross_talk: noise,
                    ..base.corpus.clone()
                })?;
                let cfg = TrainConfig {
                    seed,
                    ..base.train.clone()
                };
                let data = prepare_synthetic(&syn, &cfg)?;
                let stage1 = train_stage1(&data, &cfg)?;
                stage1_acc.push(test_metrics(&stage1, &data)?.accuracy);
                let mut k = 0;
                for &alpha in &alphas {
                    for &beta in &betas {
                        for &sigma in &sigmas {
                            let mut c = cfg.clone();
                            c.stage2.alpha = alpha;
                            c.stage2.beta = beta;
                            c.stage2.sigma = sigma;
                            acc[k].push(test_metrics(&train_stage2(&data, &stage1, &c)?, &data)?.accuracy);
                            k += 1;
                        }
                    }
                }
            }
            let stage1_accuracy = Summary::of(&stage1_acc);
            let mut k = 0;
            for &alpha in &alphas {
                for &beta in &betas {
                    for &sigma in &sigmas {
                        out.push(SweepPoint {
                            alpha,
                            beta,
                            sigma,
                            p_sig,
                            noise,
                            stage1_accuracy,
                            accuracy: Summary::of(&acc[k]),
                        });
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_uses_sample_stddev_in_percent() {
        let s = Summary::of(&[0.5, 0.7]);
        assert!((s.mean - 60.0).abs() < 1e-12);
        assert!((s.stddev - 14.142135623730951).abs() < 1e-9);
        assert_eq!(Summary::of(&[0.3]).stddev, 0.0);
    }

    #[test]
    fn axis_defaults_to_base() {
        assert_eq!(axis(&[], 0.9), vec![0.9]);
        assert_eq!(axis(&[0.1, 0.2], 0.9), vec![0.1, 0.2]);
    }

    #[test]
    fn variant_names_are_distinct() {
        let names: std::collections::BTreeSet<_> = Variant::ALL.iter().map(|v| v.name()).collect();
        assert_eq!(names.len(), 4);
        assert_eq!(Variant::Stage1.switches(), None);
    }
}
