//! Generate a small synthetic corpus and write it as JSONL, along with the
//! hidden labels of the unlabeled split and the stand-in word vectors.
//!
//!     cargo run --example generate_corpus -- [out_dir]

use std::fs::File;
use std::path::PathBuf;

use lnmt::corpus::{generate_synthetic, split_counts, write_corpus, write_hidden_labels, SynthConfig, DEFAULT_BALANCE_TOLERANCE};
use lnmt::features::write_embeddings;

fn main() -> anyhow::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("lnmt-example-corpus"));
    std::fs::create_dir_all(&out)?;

    let cfg = SynthConfig::benchmark(7);
    let syn = generate_synthetic(&cfg)?;
    write_corpus(&syn.corpus, File::create(out.join("corpus.jsonl"))?)?;
    write_hidden_labels(&syn.hidden, File::create(out.join("hidden_labels.jsonl"))?)?;
    write_embeddings(&cfg.word_vectors(32)?, File::create(out.join("vectors.txt"))?)?;

    let counts = split_counts(&syn.corpus, DEFAULT_BALANCE_TOLERANCE);
    println!("{counts:#?}");
    let first = &syn.corpus.samples()[0];
    println!("first sample {} ({} reports): {}", first.id, first.reports.len(), first.article);
    println!("wrote {}", out.display());
    Ok(())
}
