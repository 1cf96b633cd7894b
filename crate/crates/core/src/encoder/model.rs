//! Token-level encoding and pooling, report-level encoding and pooling,
//! emotion-aware attention, and the sigmoid classifier.

use rand_chacha::ChaCha8Rng;

use super::block::{block_backward, block_forward, BlockCache};
use super::params::{EncoderParams, StackParams};
use crate::error::{Error, Result};
use crate::features::{EncodedSample, PAD};
use crate::linalg::{axpy, dot, sigmoid, softmax_backward, softmax_in_place, Mat};

/// Forward outputs and (optionally) the intermediates needed by
/// [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `z_{i,j}` per sequence, `n_i x d`.
    pub token_features: Vec<Mat>,
    /// Token pooling weights `g_i` per sequence.
    pub token_attention: Vec<Vec<f64>>,
    /// Sentence representations `f^s`, `(M+1) x d`.
    pub sentence: Mat,
    /// Report-level outputs `z^s`, `(M+1) x d`.
    pub report_features: Mat,
    /// Report pooling weights `pi`.
    pub report_attention: Vec<f64>,
    pub f_sem: Vec<f64>,
    pub emotion_query: Mat,
    pub emotion_key: Mat,
    pub emotion_value: Mat,
    /// Row `j` is the softmax over `i` for query position `j`.
    pub emotion_attention: Mat,
    pub f_emo: Vec<f64>,
    /// `f_sem ++ f_emo`
    pub f_c: Vec<f64>,
    pub logit: f64,
    pub p: f64,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    token_ids: Vec<Vec<u32>>,
    token_blocks: Vec<Vec<BlockCache>>,
    report_blocks: Vec<BlockCache>,
    emotion_in: Mat,
}

impl ForwardTrace {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Drops the backward cache, keeping only the outputs.
    pub fn strip_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

/// Lightweight forward result used for inference passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p: f64,
    pub logit: f64,
    pub f_c: Vec<f64>,
}

fn stack_forward(
    x: Mat,
    stack: &StackParams,
    rng: Option<&mut ChaCha8Rng>,
    rate: f64,
    keep: bool,
) -> (Mat, Vec<BlockCache>) {
    let mut caches = Vec::with_capacity(if keep { stack.layers.len() } else { 0 });
    let mut h = x;
    let mut rng = rng;
    for layer in &stack.layers {
        let drop = rng.as_deref_mut().map(|r| (r, rate));
        let (out, c) = block_forward(&h, layer, stack.n_heads, drop);
        if keep {
            caches.push(c);
        }
        h = out;
    }
    (h, caches)
}

fn stack_backward(
    dout: Mat,
    caches: &[BlockCache],
    stack: &StackParams,
    grads: &mut StackParams,
) -> Mat {
    let mut d = dout;
    for (l, c) in caches.iter().enumerate().rev() {
        d = block_backward(&d, c, &stack.layers[l], &mut grads.layers[l], stack.n_heads);
    }
    d
}

/// Attention pooling: `w = softmax(z gamma)`, returns `(sum_j w_j z_j, w)`.
fn attention_pool(z: &Mat, gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut w: Vec<f64> = (0..z.rows()).map(|j| dot(z.row(j), gamma)).collect();
    softmax_in_place(&mut w);
    let mut out = vec![0.0; z.cols()];
    for (j, &wj) in w.iter().enumerate() {
        axpy(wj, z.row(j), &mut out);
    }
    (out, w)
}

/// Backward of [`attention_pool`]: returns `dz`, accumulates `dgamma`.
fn attention_pool_backward(
    z: &Mat,
    gamma: &[f64],
    w: &[f64],
    pooled: &[f64],
    dpooled: &[f64],
    dgamma: &mut [f64],
) -> Mat {
    let mut dz = Mat::zeros(z.rows(), z.cols());
    let inner = dot(pooled, dpooled);
    for j in 0..z.rows() {
        let ds = w[j] * (dot(z.row(j), dpooled) - inner);
        let row = dz.row_mut(j);
        axpy(w[j], dpooled, row);
        axpy(ds, gamma, row);
        axpy(ds, z.row(j), dgamma);
    }
    dz
}

fn check(m: &Mat, stage: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            stage: stage.to_string(),
        })
    }
}

fn check_vec(v: &[f64], stage: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            stage: stage.to_string(),
        })
    }
}

fn validate_input(enc: &EncodedSample, p: &EncoderParams) -> Result<()> {
    if enc.n_sequences() == 0 {
        return Err(Error::Shape("sample has no sequences".into()));
    }
    if enc.max_tokens() > p.positional.rows() {
        return Err(Error::Shape(format!(
            "token limit {} exceeds positional table {}",
            enc.max_tokens(),
            p.positional.rows()
        )));
    }
    let vocab = p.vocab_size();
    for i in 0..enc.n_sequences() {
        if let Some(&bad) = enc.ids(i).iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::Shape(format!("token id {bad} >= vocab size {vocab}")));
        }
    }
    Ok(())
}

/// Forward pass in evaluation mode (no dropout), keeping the backward cache.
pub fn forward(enc: &EncodedSample, p: &EncoderParams) -> Result<ForwardTrace> {
    run(enc, p, None, true)
}

/// Forward pass in training mode: dropout masks are drawn from `rng` when
/// the configured rate is positive.
pub fn forward_train(enc: &EncodedSample, p: &EncoderParams, rng: &mut ChaCha8Rng) -> Result<ForwardTrace> {
    run(enc, p, Some(rng), true)
}

/// Inference-only forward.
pub fn predict(enc: &EncodedSample, p: &EncoderParams) -> Result<Prediction> {
    let t = run(enc, p, None, false)?;
    Ok(Prediction {
        p: t.p,
        logit: t.logit,
        f_c: t.f_c,
    })
}

fn run(
    enc: &EncodedSample,
    p: &EncoderParams,
    mut rng: Option<&mut ChaCha8Rng>,
    keep: bool,
) -> Result<ForwardTrace> {
    validate_input(enc, p)?;
    let cfg = &p.config;
    let d = cfg.d_model;
    let n_seq = enc.n_sequences();
    let rate = cfg.dropout;
    if rate <= 0.0 {
        rng = None;
    }

    let mut token_features = Vec::with_capacity(n_seq);
    let mut token_attention = Vec::with_capacity(n_seq);
    let mut token_blocks = Vec::with_capacity(n_seq);
    let mut token_ids = Vec::with_capacity(n_seq);
    let mut sentence = Mat::zeros(n_seq, d);
    for i in 0..n_seq {
        let ids = enc.ids(i);
        let mut x = Mat::zeros(ids.len(), d);
        for (j, &t) in ids.iter().enumerate() {
            let row = x.row_mut(j);
            if t as usize != PAD {
                row.copy_from_slice(p.embedding.row(t as usize));
            }
            axpy(1.0, p.positional.row(j), row);
        }
        let (z, caches) = stack_forward(x, &p.token_stack, rng.as_deref_mut(), rate, keep);
        check(&z, "token-level encoder")?;
        let (f, g) = attention_pool(&z, p.gamma_w.as_slice());
        sentence.row_mut(i).copy_from_slice(&f);
        token_features.push(z);
        token_attention.push(g);
        if keep {
            token_blocks.push(caches);
            token_ids.push(ids.to_vec());
        }
    }
    check(&sentence, "token pooling")?;

    let (zs, report_blocks) =
        stack_forward(sentence.clone(), &p.report_stack, rng.as_deref_mut(), rate, keep);
    check(&zs, "report-level encoder")?;
    let (f_sem, pi) = attention_pool(&zs, p.gamma_s.as_slice());
    check_vec(&f_sem, "report pooling")?;

    let (hq, hk, hv, beta, f_emo) = if cfg.use_emotion {
        let h = &enc.emotion;
        let mut hq = h.matmul(&p.w_hq);
        hq.add_assign(&zs);
        let hk = h.matmul(&p.w_hk);
        let hv = h.matmul(&p.w_hv);
        let scale = 1.0 / (d as f64).sqrt();
        // beta[j][i] = softmax_i(hq_i . hk_j / sqrt(d))
        let mut beta = hk.matmul_t(&hq);
        for j in 0..n_seq {
            let row = beta.row_mut(j);
            row.iter_mut().for_each(|x| *x *= scale);
            softmax_in_place(row);
        }
        let mut f_emo = vec![0.0; d];
        for i in 0..n_seq {
            let col: f64 = (0..n_seq).map(|j| beta.get(j, i)).sum();
            axpy(col / n_seq as f64, hv.row(i), &mut f_emo);
        }
        check_vec(&f_emo, "emotion attention")?;
        (hq, hk, hv, beta, f_emo)
    } else {
        (
            Mat::zeros(0, d),
            Mat::zeros(0, d),
            Mat::zeros(0, d),
            Mat::zeros(0, 0),
            vec![0.0; d],
        )
    };

    let mut f_c = f_sem.clone();
    f_c.extend_from_slice(&f_emo);
    let logit = dot(p.cls_w.as_slice(), &f_c) + p.cls_b.get(0, 0);
    if !logit.is_finite() {
        return Err(Error::NonFinite {
            stage: "classifier".into(),
        });
    }
    let prob = sigmoid(logit);

    let cache = keep.then(|| Cache {
        token_ids,
        token_blocks,
        report_blocks,
        emotion_in: enc.emotion.clone(),
    });
    Ok(ForwardTrace {
        token_features,
        token_attention,
        sentence,
        report_features: zs,
        report_attention: pi,
        f_sem,
        emotion_query: hq,
        emotion_key: hk,
        emotion_value: hv,
        emotion_attention: beta,
        f_emo,
        f_c,
        logit,
        p: prob,
        cache,
    })
}

/// Gradients of all trainable tensors given `dL/dp`.
pub fn backward(p: &EncoderParams, trace: &ForwardTrace, dl_dp: f64) -> Result<EncoderParams> {
    let mut grads = p.zeros_like();
    backward_logit_into(p, trace, dl_dp * trace.p * (1.0 - trace.p), &mut grads)?;
    Ok(grads)
}

/// Gradients given `dL/dlogit`.
pub fn backward_logit(p: &EncoderParams, trace: &ForwardTrace, dlogit: f64) -> Result<EncoderParams> {
    let mut grads = p.zeros_like();
    backward_logit_into(p, trace, dlogit, &mut grads)?;
    Ok(grads)
}

/// Accumulates gradients given `dL/dlogit` into `grads`.
pub fn backward_logit_into(
    p: &EncoderParams,
    trace: &ForwardTrace,
    dlogit: f64,
    grads: &mut EncoderParams,
) -> Result<()> {
    let cache = trace
        .cache
        .as_ref()
        .ok_or(Error::MissingCache("forward trace was built without a backward cache"))?;
    if cache.report_blocks.len() != p.report_stack.layers.len()
        || cache.token_blocks.len() != trace.token_features.len()
    {
        return Err(Error::MissingCache("layer caches do not match the parameters"));
    }
    if dlogit == 0.0 {
        return Ok(());
    }
    let d = p.d_model();
    let n_seq = trace.sentence.rows();

    // classifier
    axpy(dlogit, &trace.f_c, grads.cls_w.as_mut_slice());
    grads.cls_b.as_mut_slice()[0] += dlogit;
    let w = p.cls_w.as_slice();
    let df_sem: Vec<f64> = w[..d].iter().map(|x| x * dlogit).collect();
    let df_emo: Vec<f64> = w[d..].iter().map(|x| x * dlogit).collect();

    // report pooling
    let mut dzs = attention_pool_backward(
        &trace.report_features,
        p.gamma_s.as_slice(),
        &trace.report_attention,
        &trace.f_sem,
        &df_sem,
        grads.gamma_s.as_mut_slice(),
    );

    // emotion-aware attention
    if p.config.use_emotion {
        let beta = &trace.emotion_attention;
        let hq = &trace.emotion_query;
        let hk = &trace.emotion_key;
        let hv = &trace.emotion_value;
        let h = &cache.emotion_in;
        let nf = n_seq as f64;
        let scale = 1.0 / (d as f64).sqrt();
        let mut dhv = Mat::zeros(n_seq, d);
        let mut dcol = vec![0.0; n_seq];
        for i in 0..n_seq {
            let col: f64 = (0..n_seq).map(|j| beta.get(j, i)).sum();
            axpy(col / nf, &df_emo, dhv.row_mut(i));
            dcol[i] = dot(hv.row(i), &df_emo) / nf;
        }
        let mut dhq = Mat::zeros(n_seq, d);
        let mut dhk = Mat::zeros(n_seq, d);
        for j in 0..n_seq {
            let ds = softmax_backward(beta.row(j), &dcol);
            for i in 0..n_seq {
                let s = ds[i] * scale;
                axpy(s, hq.row(i), dhk.row_mut(j));
                axpy(s, hk.row(j), dhq.row_mut(i));
            }
        }
        h.t_matmul_acc(&dhq, &mut grads.w_hq);
        h.t_matmul_acc(&dhk, &mut grads.w_hk);
        h.t_matmul_acc(&dhv, &mut grads.w_hv);
        dzs.add_assign(&dhq);
    }

    // report-level stack
    let dsent = stack_backward(dzs, &cache.report_blocks, &p.report_stack, &mut grads.report_stack);

    // token-level pooling, stack and embeddings
    for i in 0..n_seq {
        let z = &trace.token_features[i];
        let dz = attention_pool_backward(
            z,
            p.gamma_w.as_slice(),
            &trace.token_attention[i],
            trace.sentence.row(i),
            dsent.row(i),
            grads.gamma_w.as_mut_slice(),
        );
        let dx = stack_backward(dz, &cache.token_blocks[i], &p.token_stack, &mut grads.token_stack);
        if p.config.freeze_embeddings {
            continue;
        }
        for (j, &t) in cache.token_ids[i].iter().enumerate() {
            if t as usize != PAD {
                axpy(1.0, dx.row(j), grads.embedding.row_mut(t as usize));
            }
        }
    }
    Ok(())
}
