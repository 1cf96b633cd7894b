//! Per-class precision, recall and F1 plus accuracy and AUC-ROC for a
//! trained checkpoint, computed from the corpus alone.
//!
//!     cargo run --release --example evaluate

use lnmt::corpus::{generate_synthetic, Split, SynthConfig};
use lnmt::experiment::{evaluate_checkpoint, prepare_synthetic};
use lnmt::trainer::{train_stage1, TrainConfig};

fn main() -> anyhow::Result<()> {
    let syn = generate_synthetic(&SynthConfig::benchmark(3))?;
    let mut cfg = TrainConfig::desk(3);
    cfg.stage1.epochs = 10;
    let data = prepare_synthetic(&syn, &cfg)?;
    let ckpt = train_stage1(&data, &cfg)?;

    // The checkpoint carries its vocabulary, so evaluation needs no dataset.
    for split in [Split::Val, Split::Test] {
        let report = evaluate_checkpoint(&ckpt, &syn.corpus, split)?;
        println!("{split:?}\n{}", report.to_json());
    }
    Ok(())
}
