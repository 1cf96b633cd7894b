use lnmt::checkpoint::{Checkpoint, Stage, FORMAT_VERSION};
use lnmt::corpus::{generate_synthetic, SynthConfig, Synthetic};
use lnmt::data::Dataset;
use lnmt::experiment::prepare_synthetic;
use lnmt::trainer::{
    evaluate_split, init_stage1, init_stage2, run_stage1, run_stage2, train_stage1, train_stage2, TrainConfig,
};
use lnmt::Error;

fn small_corpus(seed: u64) -> Synthetic {
    generate_synthetic(&SynthConfig {
        n_labeled: 40,
        n_val: 40,
        n_test: 40,
        n_unlabeled: 120,
        ..SynthConfig::benchmark(seed)
    })
    .unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::desk(seed);
    c.stage1.epochs = 4;
    c.stage2.generations = 3;
    c
}

fn setup(seed: u64) -> (Dataset, TrainConfig) {
    let cfg = small_config(seed);
    let data = prepare_synthetic(&small_corpus(seed), &cfg).unwrap();
    (data, cfg)
}

#[test]
fn separable_corpus_is_fit_within_twenty_epochs() {
    let syn = generate_synthetic(&SynthConfig {
        signal_strength: 1.0,
        report_count_range: (2, 4),
        ..SynthConfig::benchmark(1)
    })
    .unwrap();
    let mut cfg = TrainConfig::desk(1);
    cfg.stage1.epochs = 20;
    let data = prepare_synthetic(&syn, &cfg).unwrap();
    let ckpt = train_stage1(&data, &cfg).unwrap();
    let (train_acc, _) = evaluate_split(&ckpt.state.as_ref().unwrap().student, &data.train).unwrap().unwrap();
    assert_eq!(train_acc, 1.0);
}

#[test]
fn stage1_is_reproducible() {
    let (data, cfg) = setup(2);
    let a = train_stage1(&data, &cfg).unwrap();
    let b = train_stage1(&data, &cfg).unwrap();
    assert_eq!(a.stage1_history, b.stage1_history);
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
}

#[test]
fn frozen_teacher_and_labels_ship_the_stage1_model() {
    let (data, mut cfg) = setup(3);
    let s1 = train_stage1(&data, &cfg).unwrap();
    cfg.stage2.alpha = 1.0;
    cfg.stage2.beta = 1.0;
    let s2 = train_stage2(&data, &s1, &cfg).unwrap();
    assert_eq!(s2.model, s1.model);
    assert_eq!(s2.state.unwrap().teacher.unwrap(), s1.model);
}

#[test]
fn labeled_loss_at_first_step_is_shared_by_ablations() {
    let (data, mut cfg) = setup(4);
    let s1 = train_stage1(&data, &cfg).unwrap();
    // One optimizer step per generation.
    cfg.stage2.batch = data.unlabeled.len();
    cfg.stage2.generations = 1;
    cfg.model.dropout = 0.1;
    cfg.stage2.perturbed_reliability = true;
    let losses: Vec<f64> = [(false, false), (true, false), (true, true)]
        .into_iter()
        .map(|(lp, lr)| {
            let mut c = cfg.clone();
            c.stage2.use_lp = lp;
            c.stage2.use_lr = lr;
            train_stage2(&data, &s1, &c).unwrap().generations[0].loss_labeled
        })
        .collect();
    assert_eq!(losses[0], losses[1]);
    assert_eq!(losses[0], losses[2]);
}

#[test]
fn teacher_has_no_optimizer_moments() {
    let (data, cfg) = setup(5);
    let s1 = train_stage1(&data, &cfg).unwrap();
    let s2 = init_stage2(&data, &s1, &cfg).unwrap();
    let st = s2.state.unwrap();
    assert!(st.teacher.is_some());
    assert_eq!(st.optimizer.step, 0);
    st.optimizer.m.check_same_shape(&st.student).unwrap();
}

#[test]
fn stage2_requires_a_stage1_checkpoint() {
    let (data, cfg) = setup(6);
    let s1 = train_stage1(&data, &cfg).unwrap();
    let s2 = train_stage2(&data, &s1, &cfg).unwrap();
    assert!(matches!(init_stage2(&data, &s2, &cfg), Err(Error::Checkpoint(_))));
}

#[test]
fn generation_log_tracks_hidden_truth() {
    let (data, cfg) = setup(7);
    let s1 = train_stage1(&data, &cfg).unwrap();
    let s2 = train_stage2(&data, &s1, &cfg).unwrap();
    assert_eq!(s2.generations.len(), cfg.stage2.generations);
    for g in &s2.generations {
        let w = g.weak_label_accuracy.expect("hidden labels attached");
        assert!((0.0..=1.0).contains(&w.soft) && (0.0..=1.0).contains(&w.hard));
        assert!(g.mean_omega > 0.0 && g.mean_omega <= 1.0);
        for row in g.similarity.normalized {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_bytes_are_stable() {
    let (data, cfg) = setup(8);
    let s1 = train_stage1(&data, &cfg).unwrap();
    let s2 = train_stage2(&data, &s1, &cfg).unwrap();
    for ckpt in [s1, s2.clone(), s2.without_state()] {
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

#[test]
fn stage1_resume_matches_uninterrupted_run() {
    let (data, mut cfg) = setup(9);
    cfg.stage1.epochs = 10;
    cfg.model.dropout = 0.1;
    let straight = train_stage1(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s1.ckpt");
    run_stage1(&data, init_stage1(&data, &cfg).unwrap(), Some(5)).unwrap().save(&path).unwrap();
    let resumed = run_stage1(&data, Checkpoint::load(&path).unwrap(), None).unwrap();
    assert_eq!(resumed.epochs_done, 10);
    assert_eq!(resumed.to_bytes().unwrap(), straight.to_bytes().unwrap());
}

#[test]
fn stage2_resume_matches_uninterrupted_run() {
    let (data, mut cfg) = setup(10);
    cfg.model.dropout = 0.1;
    cfg.stage2.generations = 4;
    cfg.stage2.perturbed_reliability = true;
    let s1 = train_stage1(&data, &cfg).unwrap();
    let straight = train_stage2(&data, &s1, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s2.ckpt");
    run_stage2(&data, init_stage2(&data, &s1, &cfg).unwrap(), Some(2)).unwrap().save(&path).unwrap();
    let resumed = run_stage2(&data, Checkpoint::load(&path).unwrap(), None).unwrap();
    assert_eq!(resumed.stage, Stage::Stage2);
    assert_eq!(resumed.to_bytes().unwrap(), straight.to_bytes().unwrap());
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let (data, cfg) = setup(11);
    let bytes = train_stage1(&data, &cfg).unwrap().to_bytes().unwrap();

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    let err = Checkpoint::from_bytes(&flipped).unwrap_err().to_string();
    assert!(err.contains("corrupted"), "{err}");

    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 10]).is_err());
    assert!(Checkpoint::from_bytes(b"LNMT").is_err());

    let mut future = bytes.clone();
    future[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        Checkpoint::from_bytes(&future),
        Err(Error::VersionMismatch { found, .. }) if found == FORMAT_VERSION + 1
    ));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, &flipped).unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

#[test]
fn resume_rejects_a_different_vocabulary() {
    let (data, cfg) = setup(12);
    let s1 = train_stage1(&data, &cfg).unwrap();
    let (other, _) = setup(13);
    assert!(init_stage2(&other, &s1, &cfg).is_err());
}
