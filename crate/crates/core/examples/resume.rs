//! Interrupt training halfway, save, reload and continue. The resumed
//! checkpoint is byte-identical to an uninterrupted run.
//!
//!     cargo run --release --example resume

use lnmt::checkpoint::Checkpoint;
use lnmt::corpus::{generate_synthetic, SynthConfig};
use lnmt::experiment::prepare_synthetic;
use lnmt::trainer::{init_stage1, init_stage2, run_stage1, run_stage2, train_stage1, train_stage2, TrainConfig};

fn main() -> anyhow::Result<()> {
    let syn = generate_synthetic(&SynthConfig {
        n_unlabeled: 300,
        n_val: 100,
        n_test: 100,
        ..SynthConfig::benchmark(5)
    })?;
    let mut cfg = TrainConfig::desk(5);
    cfg.stage1.epochs = 8;
    cfg.stage2.generations = 4;
    let data = prepare_synthetic(&syn, &cfg)?;
    let dir = std::env::temp_dir().join("lnmt-example-resume");
    std::fs::create_dir_all(&dir)?;

    let path1 = dir.join("stage1.ckpt");
    run_stage1(&data, init_stage1(&data, &cfg)?, Some(4))?.save(&path1)?;
    let stage1 = run_stage1(&data, Checkpoint::load(&path1)?, None)?;
    let straight1 = train_stage1(&data, &cfg)?;
    println!("stage 1 resumed == uninterrupted: {}", stage1.to_bytes()? == straight1.to_bytes()?);

    let path2 = dir.join("stage2.ckpt");
    run_stage2(&data, init_stage2(&data, &stage1, &cfg)?, Some(2))?.save(&path2)?;
    let stage2 = run_stage2(&data, Checkpoint::load(&path2)?, None)?;
    let straight2 = train_stage2(&data, &stage1, &cfg)?;
    println!("stage 2 resumed == uninterrupted: {}", stage2.to_bytes()? == straight2.to_bytes()?);
    Ok(())
}
