use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{EncodeLimits, Vocab, EMOTION_DIM};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    /// Token-level transformer layers.
    pub token_layers: usize,
    /// Report-level transformer layers.
    pub report_layers: usize,
    /// Feed-forward inner width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub limits: EncodeLimits,
    pub use_emotion: bool,
    pub freeze_embeddings: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// d_model 300, 4 heads, 2 token-level and 4 report-level layers.
    pub fn full() -> Self {
        Self {
            d_model: 300,
            n_heads: 4,
            token_layers: 2,
            report_layers: 4,
            ffn_mult: 4,
            limits: EncodeLimits::default(),
            use_emotion: true,
            freeze_embeddings: false,
            dropout: 0.0,
        }
    }

    /// Small model for CPU experiments on synthetic corpora.
    pub fn desk() -> Self {
        Self {
            d_model: 16,
            n_heads: 2,
            token_layers: 1,
            report_layers: 1,
            ffn_mult: 2,
            dropout: 0.1,
            ..Self::full()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 {
            return Err(Error::Config("d_model and n_heads must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.ffn_mult == 0 {
            return Err(Error::Config("ffn_mult must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.limits.max_tokens == 0 || self.limits.max_sequences == 0 {
            return Err(Error::Config("sequence limits must be positive".into()));
        }
        Ok(())
    }
}

/// One transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Mat,
    pub ln1_bias: Mat,
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
    pub ln2_gain: Mat,
    pub ln2_bias: Mat,
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

const LAYER_TENSORS: [&str; 16] = [
    "ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_gain",
    "ln2_bias", "w1", "b1", "w2", "b2",
];

impl LayerParams {
    fn zeros(d: usize, ffn: usize) -> Self {
        Self {
            ln1_gain: Mat::zeros(1, d),
            ln1_bias: Mat::zeros(1, d),
            wq: Mat::zeros(d, d),
            bq: Mat::zeros(1, d),
            wk: Mat::zeros(d, d),
            bk: Mat::zeros(1, d),
            wv: Mat::zeros(d, d),
            bv: Mat::zeros(1, d),
            wo: Mat::zeros(d, d),
            bo: Mat::zeros(1, d),
            ln2_gain: Mat::zeros(1, d),
            ln2_bias: Mat::zeros(1, d),
            w1: Mat::zeros(d, ffn),
            b1: Mat::zeros(1, ffn),
            w2: Mat::zeros(ffn, d),
            b2: Mat::zeros(1, d),
        }
    }

    fn init(d: usize, ffn: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(d, ffn);
        p.ln1_gain.fill(1.0);
        p.ln2_gain.fill(1.0);
        for m in [&mut p.wq, &mut p.wk, &mut p.wv, &mut p.wo, &mut p.w1, &mut p.w2] {
            xavier_uniform(m, rng);
        }
        p
    }

    fn tensors(&self) -> [&Mat; 16] {
        [
            &self.ln1_gain, &self.ln1_bias, &self.wq, &self.bq, &self.wk, &self.bk, &self.wv,
            &self.bv, &self.wo, &self.bo, &self.ln2_gain, &self.ln2_bias, &self.w1, &self.b1,
            &self.w2, &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Mat; 16] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// A stack of transformer blocks sharing a head count.
#[derive(Debug, Clone, PartialEq)]
pub struct StackParams {
    pub layers: Vec<LayerParams>,
    pub n_heads: usize,
}

/// Every tensor of the baseline model. Also used as the gradient and
/// optimizer-moment container, since those share its shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: ModelConfig,
    /// `vocab x d_model`. Row 0 (`<pad>`) is never read.
    pub embedding: Mat,
    pub token_stack: StackParams,
    pub report_stack: StackParams,
    /// Token pooling vector, `1 x d_model`.
    pub gamma_w: Mat,
    /// Report pooling vector, `1 x d_model`.
    pub gamma_s: Mat,
    /// Emotion projections, `47 x d_model`.
    pub w_hq: Mat,
    pub w_hk: Mat,
    pub w_hv: Mat,
    /// `1 x 2 d_model`
    pub cls_w: Mat,
    /// `1 x 1`
    pub cls_b: Mat,
    /// Sinusoidal table, `max_tokens x d_model`; not trainable.
    pub positional: Mat,
}

pub fn sinusoidal_table(len: usize, d: usize) -> Mat {
    Mat::from_fn(len, d, |pos, i| {
        let k = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * k / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn xavier_uniform(m: &mut Mat, rng: &mut impl Rng) {
    let bound = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
    for x in m.as_mut_slice() {
        *x = rng.gen_range(-bound..bound);
    }
}

/// Xavier-uniform projections, zero biases, unit layer-norm gains,
/// pooling vectors from `N(0, d^-1/2)`, embeddings copied from `vocab`.
pub fn init_params(cfg: &ModelConfig, vocab: &Vocab, seed: u64) -> Result<EncoderParams> {
    init_with_embedding(cfg, vocab.vectors().clone(), seed)
}

fn init_with_embedding(cfg: &ModelConfig, embedding: Mat, seed: u64) -> Result<EncoderParams> {
    cfg.validate()?;
    if embedding.cols() != cfg.d_model {
        return Err(Error::Config(format!(
            "embedding dim {} != d_model {}",
            embedding.cols(),
            cfg.d_model
        )));
    }
    let d = cfg.d_model;
    let ffn = cfg.ffn_mult * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stack = |layers: usize, rng: &mut ChaCha8Rng| StackParams {
        layers: (0..layers).map(|_| LayerParams::init(d, ffn, rng)).collect(),
        n_heads: cfg.n_heads,
    };
    let token_stack = stack(cfg.token_layers, &mut rng);
    let report_stack = stack(cfg.report_layers, &mut rng);
    let gamma = Normal::new(0.0, (d as f64).powf(-0.5)).expect("valid std");
    let gamma_w = Mat::from_fn(1, d, |_, _| gamma.sample(&mut rng));
    let gamma_s = Mat::from_fn(1, d, |_, _| gamma.sample(&mut rng));
    let mut w_hq = Mat::zeros(EMOTION_DIM, d);
    let mut w_hk = Mat::zeros(EMOTION_DIM, d);
    let mut w_hv = Mat::zeros(EMOTION_DIM, d);
    for m in [&mut w_hq, &mut w_hk, &mut w_hv] {
        xavier_uniform(m, &mut rng);
    }
    let mut cls_w = Mat::zeros(1, 2 * d);
    xavier_uniform(&mut cls_w, &mut rng);
    Ok(EncoderParams {
        config: cfg.clone(),
        embedding,
        token_stack,
        report_stack,
        gamma_w,
        gamma_s,
        w_hq,
        w_hk,
        w_hv,
        cls_w,
        cls_b: Mat::zeros(1, 1),
        positional: sinusoidal_table(cfg.limits.max_tokens, d),
    })
}

impl EncoderParams {
    /// All trainable tensors zero, with the shapes implied by `cfg` and
    /// `vocab_size`.
    pub fn zeros(cfg: &ModelConfig, vocab_size: usize) -> Result<Self> {
        let p = init_with_embedding(cfg, Mat::zeros(vocab_size, cfg.d_model), 0)?;
        Ok(p.zeros_like())
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    /// Same shapes, all trainable tensors zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// All trainable tensors with stable names, in a fixed order. The
    /// positional table is excluded.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = vec![("embedding".into(), &self.embedding)];
        for (prefix, stack) in [("token", &self.token_stack), ("report", &self.report_stack)] {
            for (l, layer) in stack.layers.iter().enumerate() {
                for (name, t) in LAYER_TENSORS.iter().zip(layer.tensors()) {
                    out.push((format!("{prefix}.{l}.{name}"), t));
                }
            }
        }
        out.extend([
            ("gamma_w".to_string(), &self.gamma_w),
            ("gamma_s".to_string(), &self.gamma_s),
            ("w_hq".to_string(), &self.w_hq),
            ("w_hk".to_string(), &self.w_hk),
            ("w_hv".to_string(), &self.w_hv),
            ("cls_w".to_string(), &self.cls_w),
            ("cls_b".to_string(), &self.cls_b),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out: Vec<(String, &mut Mat)> = vec![("embedding".into(), &mut self.embedding)];
        for (prefix, stack) in [("token", &mut self.token_stack), ("report", &mut self.report_stack)] {
            for (l, layer) in stack.layers.iter_mut().enumerate() {
                for (name, t) in LAYER_TENSORS.iter().zip(layer.tensors_mut()) {
                    out.push((format!("{prefix}.{l}.{name}"), t));
                }
            }
        }
        out.extend([
            ("gamma_w".to_string(), &mut self.gamma_w),
            ("gamma_s".to_string(), &mut self.gamma_s),
            ("w_hq".to_string(), &mut self.w_hq),
            ("w_hk".to_string(), &mut self.w_hk),
            ("w_hv".to_string(), &mut self.w_hv),
            ("cls_w".to_string(), &mut self.cls_w),
            ("cls_b".to_string(), &mut self.cls_b),
        ]);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// Errors unless `other` has exactly the same tensor names and shapes.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        let a = self.tensors();
        let b = other.tensors();
        if a.len() != b.len() {
            return Err(Error::Shape(format!("{} tensors vs {}", a.len(), b.len())));
        }
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::Shape(format!(
                    "{na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Applies `f` to every pair of matching tensors.
    pub fn zip_apply(&mut self, other: &Self, mut f: impl FnMut(&mut [f64], &[f64])) -> Result<()> {
        self.check_same_shape(other)?;
        let others = other.tensors();
        for ((_, t), (_, o)) in self.tensors_mut().into_iter().zip(others) {
            f(t.as_mut_slice(), o.as_slice());
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.as_slice().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.zip_apply(other, |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        })
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}
