//! Stage 1 against the three mean-teacher variants, plus the emotion
//! ablation, on a reduced corpus and two seeds.
//!
//!     cargo run --release --example ablation

use lnmt::experiment::{run_ablation_suite, AblationOptions, Variant};

fn main() -> anyhow::Result<()> {
    let mut opts = AblationOptions::desk(vec![0, 1]);
    opts.corpus.n_unlabeled = 600;
    opts.corpus.n_val = 200;
    opts.corpus.n_test = 200;
    opts.train.stage1.epochs = 15;
    opts.train.stage2.generations = 4;

    let manifest = run_ablation_suite(&opts)?;
    for v in Variant::ALL {
        let s = manifest.summary_of(v).expect("every variant runs");
        println!("{:<24} {:.2} +- {:.2}", v.name(), s.mean, s.stddev);
    }
    if let Some(e) = &manifest.emotion {
        println!(
            "stage 1 with emotion {:.2}, without {:.2}",
            e.with_emotion.mean, e.without_emotion.mean
        );
    }
    Ok(())
}
