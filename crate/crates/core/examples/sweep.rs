//! Full-method accuracy over a small grid of EMA momentum and weak-label
//! retention, on a reduced corpus.
//!
//!     cargo run --release --example sweep

use lnmt::experiment::{sweep, AblationOptions, SweepGrid};

fn main() -> anyhow::Result<()> {
    let mut base = AblationOptions::desk(vec![0]);
    base.corpus.n_unlabeled = 600;
    base.corpus.n_val = 200;
    base.corpus.n_test = 200;
    base.train.stage1.epochs = 15;
    base.train.stage2.generations = 3;
    let grid = SweepGrid {
        alpha: vec![0.9, 0.99],
        beta: vec![0.3, 0.6],
        ..SweepGrid::default()
    };

    println!("alpha  beta   stage1  refined");
    for p in sweep(&base, &grid)? {
        println!(
            "{:<6} {:<6} {:>6.2}  {:>7.2}",
            p.alpha, p.beta, p.stage1_accuracy.mean, p.accuracy.mean
        );
    }
    Ok(())
}
