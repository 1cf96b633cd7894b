//! Stage 2: refine the stage-1 weak labels with the mean teacher and watch
//! their accuracy against the hidden truth, generation by generation.
//!
//!     cargo run --release --example refine

use lnmt::corpus::{generate_synthetic, SynthConfig};
use lnmt::experiment::prepare_synthetic;
use lnmt::trainer::{evaluate_split, train_stage1, train_stage2, TrainConfig};

fn main() -> anyhow::Result<()> {
    let syn = generate_synthetic(&SynthConfig::benchmark(2))?;
    let cfg = TrainConfig::desk(2);
    let data = prepare_synthetic(&syn, &cfg)?;
    let stage1 = train_stage1(&data, &cfg)?;
    let stage2 = train_stage2(&data, &stage1, &cfg)?;

    println!("gen  weak-label acc (soft/hard)  mean omega  omega right/wrong  teacher val");
    for g in &stage2.generations {
        let w = g.weak_label_accuracy.expect("hidden labels attached");
        let [right, wrong] = g.omega_by_correctness.unwrap_or([None, None]);
        println!(
            "{:>3}  {:.3} / {:.3}              {:.3}       {:.3} / {:.3}      {:.3}",
            g.generation,
            w.soft,
            w.hard,
            g.mean_omega,
            right.unwrap_or(f64::NAN),
            wrong.unwrap_or(f64::NAN),
            g.teacher_val_accuracy.unwrap_or(f64::NAN)
        );
    }
    for (name, ckpt) in [("stage 1", &stage1), ("stage 2", &stage2)] {
        let (acc, _) = evaluate_split(&ckpt.model, &data.test)?.expect("test split is labeled");
        println!("{name} test accuracy {acc:.3}");
    }
    Ok(())
}
