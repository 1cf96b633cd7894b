//! Pre-layer-norm transformer block and its exact backward pass.
//!
//! ```text
//! a  = MHA(LN1(x));   x1 = x + drop(a)
//! f  = W2 gelu(W1 LN2(x1) + b1) + b2;   out = x1 + drop(f)
//! ```

use rand::Rng;

use super::params::LayerParams;
use crate::linalg::{axpy, dot, softmax_backward, softmax_in_place, Mat};

pub(crate) const LN_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Mat, gain: &Mat, bias: &Mat) -> (Mat, LnCache) {
    let (n, d) = x.shape();
    let mut xhat = Mat::zeros(n, d);
    let mut out = Mat::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    let g = gain.as_slice();
    let b = bias.as_slice();
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for c in 0..d {
            xh[c] = (row[c] - mean) * is;
        }
        let o = out.row_mut(r);
        for c in 0..d {
            o[c] = g[c] * xh[c] + b[c];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// Returns `dx` and accumulates `dgain`, `dbias`.
pub(crate) fn layer_norm_backward(
    dy: &Mat,
    cache: &LnCache,
    gain: &Mat,
    dgain: &mut Mat,
    dbias: &mut Mat,
) -> Mat {
    let (n, d) = dy.shape();
    let g = gain.as_slice();
    let mut dx = Mat::zeros(n, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..n {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        {
            let dg = dgain.as_mut_slice();
            for c in 0..d {
                dg[c] += dyr[c] * xh[c];
            }
        }
        {
            let db = dbias.as_mut_slice();
            for c in 0..d {
                db[c] += dyr[c];
            }
        }
        for c in 0..d {
            dxhat[c] = dyr[c] * g[c];
        }
        let sum_dxhat: f64 = dxhat.iter().sum();
        let sum_dxhat_xhat = dot(&dxhat, xh);
        let scale = cache.inv_std[r] / d as f64;
        let out = dx.row_mut(r);
        for c in 0..d {
            out[c] = scale * (d as f64 * dxhat[c] - sum_dxhat - xh[c] * sum_dxhat_xhat);
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    ln1: LnCache,
    ln1_out: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Per head attention probabilities, `n x n`.
    attn: Vec<Mat>,
    concat: Mat,
    drop1: Option<Vec<f64>>,
    ln2: LnCache,
    ln2_out: Mat,
    pre_act: Mat,
    act: Mat,
    drop2: Option<Vec<f64>>,
}

fn dropout_mask(rng: &mut impl Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

fn apply_mask(m: &mut Mat, mask: &[f64]) {
    for (x, k) in m.as_mut_slice().iter_mut().zip(mask) {
        *x *= k;
    }
}

/// Forward through one block. `dropout` is `Some((rng, rate))` in training
/// mode with a positive rate.
pub(crate) fn block_forward<R: Rng>(
    x: &Mat,
    p: &LayerParams,
    n_heads: usize,
    dropout: Option<(&mut R, f64)>,
) -> (Mat, BlockCache) {
    let (n, d) = x.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (ln1_out, ln1) = layer_norm(x, &p.ln1_gain, &p.ln1_bias);
    let mut q = ln1_out.matmul(&p.wq);
    q.add_row_bias(&p.bq);
    let mut k = ln1_out.matmul(&p.wk);
    k.add_row_bias(&p.bk);
    let mut v = ln1_out.matmul(&p.wv);
    v.add_row_bias(&p.bv);

    let mut concat = Mat::zeros(n, d);
    let mut attn = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let off = h * dh;
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[off..off + dh];
            let row = a.row_mut(i);
            for j in 0..n {
                row[j] = dot(qi, &k.row(j)[off..off + dh]) * scale;
            }
            softmax_in_place(row);
        }
        for i in 0..n {
            let out = &mut concat.row_mut(i)[off..off + dh];
            for j in 0..n {
                axpy(a.get(i, j), &v.row(j)[off..off + dh], out);
            }
        }
        attn.push(a);
    }
    let mut a_out = concat.matmul(&p.wo);
    a_out.add_row_bias(&p.bo);

    let (mut rng, rate) = match dropout {
        Some((r, rate)) if rate > 0.0 => (Some(r), rate),
        _ => (None, 0.0),
    };
    let drop1 = rng.as_mut().map(|r| dropout_mask(*r, n * d, rate));
    if let Some(m) = &drop1 {
        apply_mask(&mut a_out, m);
    }
    let mut x1 = x.clone();
    x1.add_assign(&a_out);

    let (ln2_out, ln2) = layer_norm(&x1, &p.ln2_gain, &p.ln2_bias);
    let mut pre_act = ln2_out.matmul(&p.w1);
    pre_act.add_row_bias(&p.b1);
    let mut act = pre_act.clone();
    act.as_mut_slice().iter_mut().for_each(|z| *z = gelu(*z));
    let mut f = act.matmul(&p.w2);
    f.add_row_bias(&p.b2);
    let drop2 = rng.as_mut().map(|r| dropout_mask(*r, n * d, rate));
    if let Some(m) = &drop2 {
        apply_mask(&mut f, m);
    }
    let mut out = x1;
    out.add_assign(&f);

    let cache = BlockCache {
        ln1,
        ln1_out,
        q,
        k,
        v,
        attn,
        concat,
        drop1,
        ln2,
        ln2_out,
        pre_act,
        act,
        drop2,
    };
    (out, cache)
}

/// Backward through one block: accumulates parameter gradients into `g`
/// and returns the gradient with respect to the block input.
pub(crate) fn block_backward(
    dout: &Mat,
    c: &BlockCache,
    p: &LayerParams,
    g: &mut LayerParams,
    n_heads: usize,
) -> Mat {
    let (n, d) = dout.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch
    let mut df = dout.clone();
    if let Some(m) = &c.drop2 {
        apply_mask(&mut df, m);
    }
    c.act.t_matmul_acc(&df, &mut g.w2);
    df.col_sum_acc(&mut g.b2);
    let mut dpre = df.matmul_t(&p.w2);
    for (dz, z) in dpre.as_mut_slice().iter_mut().zip(c.pre_act.as_slice()) {
        *dz *= gelu_grad(*z);
    }
    c.ln2_out.t_matmul_acc(&dpre, &mut g.w1);
    dpre.col_sum_acc(&mut g.b1);
    let dln2 = dpre.matmul_t(&p.w1);
    let mut dx1 = layer_norm_backward(&dln2, &c.ln2, &p.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
    dx1.add_assign(dout);

    // attention branch
    let mut da = dx1.clone();
    if let Some(m) = &c.drop1 {
        apply_mask(&mut da, m);
    }
    c.concat.t_matmul_acc(&da, &mut g.wo);
    da.col_sum_acc(&mut g.bo);
    let dconcat = da.matmul_t(&p.wo);

    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(n, d);
    let mut dv = Mat::zeros(n, d);
    let mut dprob = vec![0.0; n];
    for (h, a) in c.attn.iter().enumerate() {
        let off = h * dh;
        for i in 0..n {
            let dci = &dconcat.row(i)[off..off + dh];
            for j in 0..n {
                dprob[j] = dot(dci, &c.v.row(j)[off..off + dh]);
                axpy(a.get(i, j), dci, &mut dv.row_mut(j)[off..off + dh]);
            }
            let dscore = softmax_backward(a.row(i), &dprob);
            for j in 0..n {
                let s = dscore[j] * scale;
                if s == 0.0 {
                    continue;
                }
                axpy(s, &c.k.row(j)[off..off + dh], &mut dq.row_mut(i)[off..off + dh]);
                axpy(s, &c.q.row(i)[off..off + dh], &mut dk.row_mut(j)[off..off + dh]);
            }
        }
    }
    c.ln1_out.t_matmul_acc(&dq, &mut g.wq);
    dq.col_sum_acc(&mut g.bq);
    c.ln1_out.t_matmul_acc(&dk, &mut g.wk);
    dk.col_sum_acc(&mut g.bk);
    c.ln1_out.t_matmul_acc(&dv, &mut g.wv);
    dv.col_sum_acc(&mut g.bv);
    let mut dln1 = dq.matmul_t(&p.wq);
    dln1.add_assign(&dk.matmul_t(&p.wk));
    dln1.add_assign(&dv.matmul_t(&p.wv));
    let mut dx = layer_norm_backward(&dln1, &c.ln1, &p.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
    dx.add_assign(&dx1);
    dx
}
