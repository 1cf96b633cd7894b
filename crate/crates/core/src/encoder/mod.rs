//! The baseline detector: hierarchical transformer encoder over the article
//! and its reports, an emotion-aware attention branch, and a sigmoid
//! classifier, all with hand-written exact gradients.

mod block;
mod model;
mod params;


pub use model::{
    backward, backward_logit, backward_logit_into, forward, forward_train, predict, ForwardTrace,
    Prediction,
};
pub use params::{init_params, sinusoidal_table, EncoderParams, LayerParams, ModelConfig, StackParams};

use crate::error::{Error, Result};

/// Probability clamp used by the cross-entropy losses.
pub const PROB_EPS: f64 = 1e-7;

fn check_label(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(Error::LabelRange(y))
    }
}

/// Binary cross entropy against a soft label, with `p` clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: f64) -> Result<f64> {
    check_label(y)?;
    let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    Ok(-(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()))
}

/// `d bce / d logit` for `p = sigmoid(logit)`. Zero where the clamp is
/// active, matching the clamped loss.
pub fn bce_grad_logit(p: f64, y: f64) -> Result<f64> {
    check_label(y)?;
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return Ok(0.0);
    }
    Ok(p - y)
}
