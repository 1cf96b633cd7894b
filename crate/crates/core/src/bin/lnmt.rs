use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use lnmt::checkpoint::{Checkpoint, Stage};
use lnmt::corpus::{
    generate_synthetic, load_corpus, load_hidden_labels, write_corpus, write_hidden_labels, write_weak_labels, Split,
    WeakLabelRecord,
};
use lnmt::data::Dataset;
use lnmt::experiment::{evaluate_checkpoint, run_ablation_suite, sweep, AblationOptions, SweepGrid};
use lnmt::features::{load_embeddings, write_embeddings, EmotionLexicon, Vocab};
use lnmt::runconfig::RunConfig;
use lnmt::trainer::{init_stage1, init_stage2, predict_split, run_stage1, run_stage2, write_jsonl};

/// Overrides the checkpoint directory from the run configuration.
const CKPT_DIR_ENV: &str = "LNMT_CHECKPOINT_DIR";
const DEFAULT_CKPT_DIR: &str = "checkpoints";

#[derive(Parser)]
#[command(name = "lnmt", version, about = "Weakly supervised fake news detection with a refining mean teacher")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key = value run configuration applied over the desk defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` assignment, applied after --config. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic corpus, hidden labels, lexicon and word vectors.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stage 1: supervised training on the labeled split.
    Pretrain {
        #[command(flatten)]
        input: CorpusInput,
        /// Continue from a stage-1 checkpoint that still has its training state.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Stage 2: teacher/student refinement over the unlabeled split.
    Refine {
        /// Stage-1 checkpoint, or a stage-2 checkpoint to resume.
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Hidden labels of unlabeled samples, for weak-label diagnostics.
        #[arg(long)]
        hidden: Option<PathBuf>,
        #[arg(long)]
        no_lp: bool,
        #[arg(long)]
        no_lr: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Metrics of a checkpoint on one labeled split, as JSON.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Component and emotion ablations over generator seeds.
    Ablate {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        no_emotion: bool,
        #[arg(long, default_value = "manifest.json")]
        out: PathBuf,
    },
    /// Full-method accuracy over a hyperparameter grid.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        p_sig: Vec<f64>,
        /// Generator cross-talk values.
        #[arg(long, value_delimiter = ',')]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value = "sweep.json")]
        out: PathBuf,
    },
    /// Weak labels for every sample of a split from a checkpoint.
    Annotate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "unlabeled")]
        split: Split,
        #[arg(long, default_value = "weak_labels.jsonl")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusInput {
    #[arg(long)]
    corpus: PathBuf,
    /// Emotion lexicon (TSV). Without one only auxiliary features are used.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Word vectors in word2vec text format.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<PathBuf>,
}

fn run_config(common: &Common, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::desk(0);
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply(&text)?;
    }
    cfg.apply(&common.sets.join("\n"))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.corpus.seed = s;
    }
    if let Ok(dir) = std::env::var(CKPT_DIR_ENV) {
        cfg.train.checkpoint_dir = Some(dir.into());
    }
    Ok(cfg)
}

fn ckpt_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.train.checkpoint_dir.clone().unwrap_or_else(|| DEFAULT_CKPT_DIR.into());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Writes one line to stdout; a closed pipe is not an error.
fn print_line(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: Option<&Path>, json: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display())),
        None => print_line(json),
    }
}

fn generate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let syn = generate_synthetic(&cfg.corpus)?;
    write_corpus(&syn.corpus, create(&out.join("corpus.jsonl"))?)?;
    write_hidden_labels(&syn.hidden, create(&out.join("hidden_labels.jsonl"))?)?;
    write_weak_labels(&syn.noisy_weak_labels(), create(&out.join("noisy_weak_labels.jsonl"))?)?;
    syn.lexicon.write_tsv(out.join("lexicon.tsv"))?;
    let vectors = cfg.corpus.word_vectors(cfg.train.model.d_model)?;
    let path = out.join("vectors.txt");
    write_embeddings(&vectors, std::io::BufWriter::new(create(&path)?)).with_context(|| format!("writing {}", path.display()))?;
    std::fs::write(out.join("corpus_config.json"), serde_json::to_string_pretty(&cfg.corpus)?)?;
    print_line(&out.display().to_string())?;
    Ok(())
}

fn pretrain(cfg: &RunConfig, input: &CorpusInput, resume: Option<&Path>) -> anyhow::Result<()> {
    let corpus = load_corpus(&input.corpus)?;
    let dir = ckpt_dir(cfg)?;
    let (mut data, mut ckpt) = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            if ckpt.stage != Stage::Stage1 {
                bail!("{} is not a stage-1 checkpoint", path.display());
            }
            let data = Dataset::with_vocab(&corpus, ckpt.vocab()?, ckpt.lexicon.clone(), ckpt.config.model.limits);
            (data, ckpt)
        }
        None => {
            let lexicon = match &input.lexicon {
                Some(p) => EmotionLexicon::load_tsv(p)?,
                None => EmotionLexicon::default(),
            };
            let vectors: Option<Vocab> = match &input.vectors {
                Some(p) => Some(load_embeddings(p, usize::MAX, cfg.train.seed)?),
                None => None,
            };
            let t = &cfg.train;
            let data = Dataset::build(
                &corpus,
                lexicon,
                vectors.as_ref(),
                t.model.d_model,
                t.embedding_std,
                t.model.limits,
                t.seed,
            )?;
            let ckpt = init_stage1(&data, t)?;
            (data, ckpt)
        }
    };
    if let Some(h) = &input.hidden {
        data.attach_hidden(&load_hidden_labels(h)?);
    }
    let path = dir.join("stage1.ckpt");
    while ckpt.epochs_done < ckpt.config.stage1.epochs {
        let next = ckpt.epochs_done + 1;
        ckpt = run_stage1(&data, ckpt, Some(next))?;
        ckpt.save(&path)?;
    }
    write_jsonl(&ckpt.stage1_history, dir.join("stage1_epochs.jsonl"))?;
    print_line(&path.display().to_string())?;
    Ok(())
}

fn refine(cfg: &RunConfig, ckpt_path: &Path, corpus: &Path, hidden: Option<&Path>, lp: bool, lr: bool) -> anyhow::Result<()> {
    let corpus = load_corpus(corpus)?;
    let loaded = Checkpoint::load(ckpt_path)?;
    let mut data = Dataset::with_vocab(&corpus, loaded.vocab()?, loaded.lexicon.clone(), loaded.config.model.limits);
    if let Some(h) = hidden {
        data.attach_hidden(&load_hidden_labels(h)?);
    }
    let mut ckpt = match loaded.stage {
        Stage::Stage1 => {
            let mut t = cfg.train.clone();
            t.stage2.use_lp = lp;
            t.stage2.use_lr = lr;
            init_stage2(&data, &loaded, &t)?
        }
        Stage::Stage2 => loaded,
    };
    let dir = ckpt_dir(cfg)?;
    let path = dir.join("stage2.ckpt");
    while ckpt.epochs_done < ckpt.config.stage2.generations {
        let next = ckpt.epochs_done + 1;
        ckpt = run_stage2(&data, ckpt, Some(next))?;
        ckpt.save(&path)?;
    }
    write_jsonl(&ckpt.generations, dir.join("generations.jsonl"))?;
    print_line(&path.display().to_string())?;
    Ok(())
}

fn annotate(ckpt: &Path, corpus: &Path, split: Split, out: &Path) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(ckpt)?;
    let corpus = load_corpus(corpus)?;
    let data = Dataset::with_vocab(&corpus, ckpt.vocab()?, ckpt.lexicon.clone(), ckpt.config.model.limits);
    let s = data.split(split);
    let scores = predict_split(&ckpt.model, &s.samples)?;
    let records: Vec<WeakLabelRecord> = s
        .ids
        .iter()
        .zip(scores)
        .map(|(id, y_u)| WeakLabelRecord { id: id.clone(), y_u })
        .collect();
    write_weak_labels(&records, create(out)?)?;
    print_line(&out.display().to_string())?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    match &cli.cmd {
        Cmd::Generate { out, seed } => generate(&run_config(common, *seed)?, out),
        Cmd::Pretrain { input, resume, seed } => pretrain(&run_config(common, *seed)?, input, resume.as_deref()),
        Cmd::Refine {
            ckpt,
            corpus,
            hidden,
            no_lp,
            no_lr,
            seed,
        } => refine(&run_config(common, *seed)?, ckpt, corpus, hidden.as_deref(), !no_lp, !no_lr),
        Cmd::Evaluate {
            ckpt,
            corpus,
            split,
            out,
        } => {
            let report = evaluate_checkpoint(&Checkpoint::load(ckpt)?, &load_corpus(corpus)?, *split)?;
            write_json(out.as_deref(), &report.to_json())
        }
        Cmd::Ablate {
            seeds,
            first_seed,
            no_emotion,
            out,
        } => {
            let cfg = run_config(common, None)?;
            let opts = AblationOptions {
                corpus: cfg.corpus,
                train: cfg.train,
                seeds: (*first_seed..first_seed + seeds).collect(),
                emotion_ablation: !no_emotion,
            };
            if opts.seeds.len() < 3 {
                log::warn!("fewer than 3 seeds; aggregates will be noisy");
            }
            write_json(Some(out), &run_ablation_suite(&opts)?.to_json())
        }
        Cmd::Sweep {
            alpha,
            beta,
            sigma,
            p_sig,
            noise,
            seeds,
            out,
        } => {
            let cfg = run_config(common, None)?;
            let base = AblationOptions {
                corpus: cfg.corpus,
                train: cfg.train,
                seeds: (0..*seeds).collect(),
                emotion_ablation: false,
            };
            let grid = SweepGrid {
                alpha: alpha.clone(),
                beta: beta.clone(),
                sigma: sigma.clone(),
                p_sig: p_sig.clone(),
                noise: noise.clone(),
            };
            write_json(Some(out), &serde_json::to_string_pretty(&sweep(&base, &grid)?)?)
        }
        Cmd::Annotate {
            ckpt,
            corpus,
            split,
            out,
        } => annotate(ckpt, corpus, *split, out),
    }
}

/// Machine-readable failure class, also used to pick the exit code.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    use lnmt::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<lnmt::Error>()) {
        Some(E::Io { .. }) => ("io", 3),
        Some(E::Config(_)) => ("config", 4),
        Some(E::Checkpoint(_) | E::VersionMismatch { .. }) => ("checkpoint", 5),
        Some(E::MalformedLine { .. } | E::DuplicateId { .. } | E::InvalidLabel { .. } | E::Json(_)) => ("data", 6),
        Some(E::NonFinite { .. }) => ("numeric", 7),
        Some(_) => ("internal", 1),
        None if err.chain().any(|e| e.is::<std::io::Error>()) => ("io", 3),
        None => ("error", 1),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprint!("{rendered}");
            let first = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("lnmt: error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            let mut msg = String::new();
            for link in err.chain().map(|e| e.to_string()) {
                if !msg.contains(&link) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&link);
                }
            }
            let msg = msg.replace('\n', " ");
            eprintln!("lnmt: error[{kind}]: {msg}");
            ExitCode::from(code)
        }
    }
}
