//! Stage 1: train the encoder on the small labeled split and report the
//! best validation checkpoint.
//!
//!     cargo run --release --example pretrain

use lnmt::corpus::{generate_synthetic, SynthConfig};
use lnmt::experiment::prepare_synthetic;
use lnmt::trainer::{evaluate_split, train_stage1, TrainConfig};

fn main() -> anyhow::Result<()> {
    let syn = generate_synthetic(&SynthConfig::benchmark(1))?;
    let cfg = TrainConfig::desk(1);
    let data = prepare_synthetic(&syn, &cfg)?;
    println!(
        "vocab {} words, {} labeled, {} unlabeled",
        data.vocab.len(),
        data.train.len(),
        data.unlabeled.len()
    );

    let ckpt = train_stage1(&data, &cfg)?;
    for r in &ckpt.stage1_history {
        println!(
            "epoch {:>2}  lr {:.2e}  loss {:.4}  val acc {:.3}",
            r.epoch,
            r.lr,
            r.train_loss,
            r.val_accuracy.unwrap_or(f64::NAN)
        );
    }
    let (acc, loss) = evaluate_split(&ckpt.model, &data.test)?.expect("test split is labeled");
    println!("best val {:?}; test accuracy {acc:.3}, loss {loss:.4}", ckpt.best_val_accuracy);
    Ok(())
}
