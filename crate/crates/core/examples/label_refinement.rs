//! The weak-label refinement rules on hand-made numbers: label similarity
//! between two sets of hard labels, propagation of a soft label, and the
//! credibility weight from two class-likelihood vectors.
//!
//!     cargo run --example label_refinement

use lnmt::corpus::Label::{Fake as F, Real as R};
use lnmt::meanteacher::{label_similarity, propagate, uncertainty};

fn main() -> anyhow::Result<()> {
    let student = [F, F, F, R, R, R, F, R];
    let teacher = [F, F, R, R, R, R, F, F];
    let sim = label_similarity(&student, &teacher)?;
    println!("raw similarity        {:.3?}", sim.raw);
    println!("row-normalized        {:.3?}", sim.normalized);

    for (y_u, y_us) in [(0.9, 0.8), (0.9, 0.1), (0.2, 0.7)] {
        let row: Vec<String> = [0.0, 0.6, 1.0]
            .iter()
            .map(|&beta| Ok(format!("beta {beta}: {:.3}", propagate(y_u, y_us, &sim.normalized, beta)?)))
            .collect::<lnmt::Result<_>>()?;
        println!("teacher {y_u}, student {y_us} -> {}", row.join(", "));
    }

    for (qt, qs) in [([0.9, 0.1], [0.9, 0.1]), ([0.9, 0.1], [0.6, 0.4]), ([1.0, 0.0], [0.0, 1.0])] {
        let r = uncertainty(&qt, &qs, 1.0)?;
        println!("q_t {qt:?} q_s {qs:?}: u {:.4}, omega {:.4}", r.u, r.omega);
    }
    Ok(())
}
