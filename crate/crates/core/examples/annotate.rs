//! Weak labels for the unlabeled split from a stage-1 model, written as
//! JSONL records of `id` and the soft label `y_u`.
//!
//!     cargo run --release --example annotate

use lnmt::corpus::{generate_synthetic, write_weak_labels, Label, SynthConfig, WeakLabelRecord};
use lnmt::experiment::prepare_synthetic;
use lnmt::trainer::{predict_split, train_stage1, TrainConfig};

fn main() -> anyhow::Result<()> {
    let syn = generate_synthetic(&SynthConfig::benchmark(4))?;
    let mut cfg = TrainConfig::desk(4);
    cfg.stage1.epochs = 10;
    let data = prepare_synthetic(&syn, &cfg)?;
    let ckpt = train_stage1(&data, &cfg)?;

    let scores = predict_split(&ckpt.model, &data.unlabeled.samples)?;
    let records: Vec<WeakLabelRecord> = data
        .unlabeled
        .ids
        .iter()
        .zip(&scores)
        .map(|(id, &y_u)| WeakLabelRecord { id: id.clone(), y_u })
        .collect();
    let wrong = records
        .iter()
        .filter(|r| Label::from_bit(r.y_u >= 0.5) != syn.hidden.get(&r.id).expect("hidden label"))
        .count();
    println!("{} weak labels, {:.1}% wrong", records.len(), 100.0 * wrong as f64 / records.len() as f64);

    let path = std::env::temp_dir().join("lnmt-example-weak-labels.jsonl");
    write_weak_labels(&records, std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
