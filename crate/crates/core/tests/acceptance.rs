//! Acceptance criteria, one pass/fail line each. Runs as a plain binary so
//! the lines are always printed; exits nonzero if any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lnmt::corpus::{Label, SynthConfig};
use lnmt::encoder::{backward_logit, bce_grad_logit, bce_loss, forward, init_params, EncoderParams, ModelConfig};
use lnmt::experiment::{prepare_synthetic, run_ablation_suite, AblationOptions, RunManifest, Variant};
use lnmt::features::{EncodeLimits, EncodedSample, Vocab, EMOTION_DIM};
use lnmt::linalg::Mat;
use lnmt::meanteacher::{class_centers, ema_update, label_similarity, propagate_pair, uncertainty};
use lnmt::metrics::{auc_roc, compute_metrics, MetricsReport};
use lnmt::optim::{adam_step, AdamConfig, OptimizerState};
use lnmt::trainer::{predict_split, train_stage1, train_stage2, TrainConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// --- 1: gradients against central finite differences ------------------------

fn tiny_params(seed: u64) -> (EncoderParams, ModelConfig, usize) {
    let cfg = ModelConfig {
        d_model: 8,
        n_heads: 2,
        token_layers: 1,
        report_layers: 1,
        ffn_mult: 2,
        limits: EncodeLimits {
            max_tokens: 6,
            max_sequences: 2,
        },
        ..ModelConfig::full()
    };
    let vocab_size = 9;
    let tokens: Vec<String> = (0..vocab_size - 2).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::from_tokens(&tokens, cfg.d_model, 1.0, seed).unwrap();
    let mut p = init_params(&cfg, &vocab, seed).unwrap();
    // Move every tensor off its initial value so gains and biases are exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    for (name, t) in p.tensors_mut() {
        for x in t.as_mut_slice() {
            *x += rng.gen_range(-0.3..0.3);
        }
        if name == "embedding" {
            t.row_mut(0).iter_mut().for_each(|x| *x = 0.0);
        }
    }
    (p, cfg, vocab_size)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let eps = 1e-4;
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for seed in 0..20u64 {
        let (p, cfg, vocab_size) = tiny_params(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Article plus M = 2 reports.
        let seqs: Vec<Vec<usize>> = (0..3)
            .map(|_| (0..rng.gen_range(1..=cfg.limits.max_tokens)).map(|_| rng.gen_range(1..vocab_size)).collect())
            .collect();
        let emo = Mat::from_fn(3, EMOTION_DIM, |_, _| rng.gen_range(-1.0..1.0));
        let enc = EncodedSample::from_ids(&seqs, emo, cfg.limits.max_tokens);
        let y = if seed % 2 == 0 { 1.0 } else { 0.0 };
        let t = forward(&enc, &p).unwrap();
        let g = backward_logit(&p, &t, bce_grad_logit(t.p, y).unwrap()).unwrap();
        let loss = |q: &EncoderParams| bce_loss(forward(&enc, q).unwrap().p, y).unwrap();
        let n_tensors = p.tensors().len();
        for ti in 0..n_tensors {
            let (name, len) = {
                let ts = p.tensors();
                (ts[ti].0.clone(), ts[ti].1.as_slice().len())
            };
            // The padding row never receives gradient and is not trainable.
            let skip_pad = name == "embedding";
            for k in 0..len {
                if skip_pad && k < cfg.d_model {
                    continue;
                }
                let mut plus = p.clone();
                plus.tensors_mut()[ti].1.as_mut_slice()[k] += eps;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].1.as_mut_slice()[k] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let an = g.tensors()[ti].1.as_slice()[k];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                if rel > worst {
                    worst = rel;
                    worst_at = format!("seed {seed} {name}[{k}]");
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-3 && secs < 60.0,
        format!("max relative error {worst:.2e} at {worst_at}; {secs:.1}s"),
    )
}

// --- 2: oracle equivalence ---------------------------------------------------

fn brute_similarity(s: &[Label], t: &[Label]) -> [[f64; 2]; 2] {
    let set = |v: &[Label], c: Label| -> HashSet<usize> { (0..v.len()).filter(|&i| v[i] == c).collect() };
    let classes = [Label::Real, Label::Fake];
    let mut raw = [[0.0; 2]; 2];
    for (m, &cm) in classes.iter().enumerate() {
        for (n, &cn) in classes.iter().enumerate() {
            let (a, b) = (set(s, cm), set(t, cn));
            let union = a.union(&b).count();
            raw[m][n] = if union == 0 {
                0.0
            } else {
                a.intersection(&b).count() as f64 / union as f64
            };
        }
    }
    raw
}

fn scalar_adam(trace_g: &[f64], p0: f64, lr: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    for (t, &g) in trace_g.iter().enumerate() {
        let t = (t + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
    }
    p
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pick = |rng: &mut ChaCha8Rng, p: f64| if rng.gen_bool(p) { Label::Fake } else { Label::Real };
    for inst in 0..200 {
        let n = rng.gen_range(0..=1000);
        let (ps, pt) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let s: Vec<Label> = (0..n).map(|_| pick(&mut rng, ps)).collect();
        let t: Vec<Label> = (0..n).map(|_| pick(&mut rng, pt)).collect();
        let got = label_similarity(&s, &t).map_err(|e| e.to_string())?.raw;
        if got != brute_similarity(&s, &t) {
            return Err(format!("label_similarity differs on instance {inst}"));
        }
    }

    let mut worst_center = 0.0f64;
    for _ in 0..20 {
        let d = 12;
        let feats: Vec<Vec<f64>> = (0..100).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        let hard: Vec<Label> = (0..100).map(|_| pick(&mut rng, 0.5)).collect();
        let c = class_centers(&feats, &hard).map_err(|e| e.to_string())?;
        for (row, class) in [(0, Label::Real), (1, Label::Fake)] {
            // Streaming mean: mu += (x - mu) / k.
            let mut mu = vec![0.0; d];
            let mut k = 0.0;
            for (f, _) in feats.iter().zip(&hard).filter(|(_, &h)| h == class) {
                k += 1.0;
                for j in 0..d {
                    mu[j] += (f[j] - mu[j]) / k;
                }
            }
            for j in 0..d {
                worst_center = worst_center.max((mu[j] - c.rows[row][j]).abs());
            }
        }
    }

    let (mut p, _, _) = tiny_params(5);
    let p0 = p.clone();
    let mut state = OptimizerState::new(&p);
    let grads: Vec<EncoderParams> = (0..10)
        .map(|_| {
            let mut g = p.zeros_like();
            for (_, t) in g.tensors_mut() {
                t.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
            }
            g
        })
        .collect();
    for g in &grads {
        adam_step(&mut p, g, &mut state, 1e-2, &AdamConfig::default()).map_err(|e| e.to_string())?;
    }
    let mut worst_adam = 0.0f64;
    for (ti, (_, t)) in p.tensors().into_iter().enumerate() {
        for (k, &x) in t.as_slice().iter().enumerate() {
            let trace: Vec<f64> = grads.iter().map(|g| g.tensors()[ti].1.as_slice()[k]).collect();
            let want = scalar_adam(&trace, p0.tensors()[ti].1.as_slice()[k], 1e-2);
            worst_adam = worst_adam.max((x - want).abs());
        }
    }
    check(
        worst_center <= 1e-10 && worst_adam <= 1e-12,
        format!("200/200 similarity matrices exact; centers max err {worst_center:.1e}; adam max err {worst_adam:.1e}"),
    )
}

// --- 3: propagation invariants -------------------------------------------------

fn propagation_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sum_err, mut affine_err) = (0.0f64, 0.0f64);
    for i in 0..10_000 {
        let (a, b) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let c = [[a, 1.0 - a], [b, 1.0 - b]];
        let (y, ys, beta) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let pair = propagate_pair(y, ys, &c, beta).map_err(|e| e.to_string())?;
        sum_err = sum_err.max((pair[0] + pair[1] - 1.0).abs());
        if !pair.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(format!("tuple {i}: refined pair {pair:?} leaves [0, 1]"));
        }
        if propagate_pair(y, ys, &c, 1.0).unwrap()[1] != y {
            return Err(format!("tuple {i}: beta = 1 does not return y_u"));
        }
        let y2 = rng.gen_range(0.0..=1.0);
        let other = propagate_pair(y2, ys, &c, beta).unwrap()[1];
        affine_err = affine_err.max(((pair[1] - other) - beta * (y - y2)).abs());
    }
    check(
        sum_err <= 1e-9 && affine_err <= 1e-12,
        format!("10000 tuples; max |sum - 1| {sum_err:.1e}; max affinity error {affine_err:.1e}"),
    )
}

// --- 4: EMA closed form ----------------------------------------------------------

fn ema_closed_form() -> Outcome {
    let alpha = 0.999;
    let (teacher0, _, _) = tiny_params(40);
    let (student, _, _) = tiny_params(41);
    let mut worst = 0.0f64;
    for k in [1, 10, 100] {
        let mut t = teacher0.clone();
        for _ in 0..k {
            ema_update(&mut t, &student, alpha).map_err(|e| e.to_string())?;
        }
        let ak = alpha.powi(k);
        for ((_, got), ((_, t0), (_, s))) in t.tensors().into_iter().zip(teacher0.tensors().into_iter().zip(student.tensors())) {
            for ((&g, &a), &b) in got.as_slice().iter().zip(t0.as_slice()).zip(s.as_slice()) {
                worst = worst.max((g - (ak * a + (1.0 - ak) * b)).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("k in {{1, 10, 100}}, alpha 0.999: max error {worst:.1e}"))
}

// --- 5: reliability properties ---------------------------------------------------

/// Empirical MMD between two one-point samples with a Gaussian kernel.
fn mmd_oracle(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    (k(x, x) + k(y, y) - 2.0 * k(x, y)).max(0.0).sqrt()
}

fn reliability_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let a = rng.gen_range(0.0..=1.0);
        let b = rng.gen_range(0.0..=1.0);
        let sigma = rng.gen_range(0.05..3.0);
        let (qt, qs) = ([a, 1.0 - a], [b, 1.0 - b]);
        let r = uncertainty(&qt, &qs, sigma).unwrap();
        if r != uncertainty(&qs, &qt, sigma).unwrap() {
            return Err("uncertainty is not symmetric".into());
        }
        if !(r.omega > 0.0 && r.omega <= 1.0) {
            return Err(format!("omega {} outside (0, 1]", r.omega));
        }
        if (r.u == 0.0) != (a == b) {
            return Err(format!("u = {} for q_t {qt:?}, q_s {qs:?}", r.u));
        }
        if uncertainty(&qt, &qt, sigma).unwrap().u != 0.0 {
            return Err("u(q, q) != 0".into());
        }
    }
    let mut prev = -1.0;
    for i in 0..100 {
        let d = i as f64 / 99.0;
        let u = uncertainty(&[1.0, 0.0], &[1.0 - d, d], 1.0).unwrap().u;
        if u <= prev && i > 0 {
            return Err(format!("not monotone at grid point {i}"));
        }
        prev = u;
    }
    let r = uncertainty(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
    let want_u = mmd_oracle(&[1.0, 0.0], &[0.0, 1.0], 1.0);
    let want_omega = (-want_u).exp();
    check(
        (r.u - want_u).abs() <= 1e-6 && (r.omega - want_omega).abs() <= 1e-6,
        format!(
            "symmetric, zero iff equal, omega in (0, 1], monotone on 100 points; u([1,0],[0,1]) = {:.7} (oracle {want_u:.7}), omega {:.7}",
            r.u, r.omega
        ),
    )
}

// --- 6-8: ablations on the default synthetic corpus ---------------------------

fn ablation_ordering(m: &RunManifest, minutes: f64) -> Outcome {
    let mean = |v| m.summary_of(v).unwrap().mean;
    let acc: Vec<f64> = Variant::ALL.iter().map(|&v| mean(v)).collect();
    let gaps: Vec<f64> = acc.windows(2).map(|w| w[1] - w[0]).collect();
    let total = acc[3] - acc[0];
    let noise: Vec<String> = m
        .per_seed
        .iter()
        .map(|r| format!("{:.1}", 100.0 * r.initial_weak_label_error.unwrap_or(f64::NAN)))
        .collect();
    check(
        gaps.iter().all(|&g| g >= -0.3) && total >= 2.0 && minutes < 15.0,
        format!(
            "stage1 {:.2} / MT {:.2} / +LP {:.2} / +LR {:.2}; gaps {:+.2} {:+.2} {:+.2}; total {total:+.2}; initial weak-label error % per seed [{}]; {minutes:.1} min",
            acc[0],
            acc[1],
            acc[2],
            acc[3],
            gaps[0],
            gaps[1],
            gaps[2],
            noise.join(", ")
        ),
    )
}

fn emotion_direction(m: &RunManifest) -> Outcome {
    let e = m.emotion.as_ref().ok_or("emotion ablation missing")?;
    let gap = e.with_emotion.mean - e.without_emotion.mean;
    check(
        gap >= -0.2,
        format!(
            "with emotion {:.2}, without {:.2}; gap {gap:+.2}",
            e.with_emotion.mean, e.without_emotion.mean
        ),
    )
}

fn weak_label_refinement(m: &RunManifest) -> Outcome {
    let mut good = 0;
    let mut detail = Vec::new();
    for r in &m.per_seed {
        let w = &r.variant(Variant::MeanTeacherLpLr).unwrap().weak_label_accuracy;
        let first: Vec<f64> = w.iter().take(5).copied().collect();
        let ok = first.len() == 5 && first.windows(2).all(|p| p[1] >= p[0]);
        good += ok as usize;
        detail.push(format!(
            "seed {}: {} {}",
            r.seed,
            first.iter().map(|x| format!("{:.3}", x)).collect::<Vec<_>>().join(">"),
            if ok { "ok" } else { "dip" }
        ));
    }
    check(good >= 4, format!("{good}/{} seeds non-decreasing [{}]", m.per_seed.len(), detail.join("; ")))
}

// --- 9: metrics --------------------------------------------------------------------

fn metric_exactness() -> Outcome {
    use Label::{Fake as F, Real as R};
    let l = [F, F, R, R];
    if auc_roc(&[0.9, 0.8, 0.3, 0.1], &l) != Some(1.0)
        || auc_roc(&[0.9, 0.3, 0.8, 0.1], &l) != Some(0.75)
        || auc_roc(&[0.5; 4], &l) != Some(0.5)
    {
        return Err("AUC test vectors".into());
    }
    let swap = |m: &MetricsReport| (m.real, m.fake);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let n = rng.gen_range(2..200);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut labels: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.5) { F } else { R }).collect();
        labels[0] = F;
        labels[1] = R;
        let base = compute_metrics(&scores, &labels).unwrap();

        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        let ps: Vec<f64> = order.iter().map(|&k| scores[k]).collect();
        let pl: Vec<Label> = order.iter().map(|&k| labels[k]).collect();
        if compute_metrics(&ps, &pl).unwrap() != base {
            return Err(format!("instance {i}: permutation changed metrics"));
        }

        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        if auc_roc(&cubed, &labels) != base.auc_roc {
            return Err(format!("instance {i}: monotone transform changed AUC"));
        }

        let flipped_scores: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        let flipped_labels: Vec<Label> = labels.iter().map(|l| l.flip()).collect();
        let sw = compute_metrics(&flipped_scores, &flipped_labels).unwrap();
        if (sw.fake, sw.real) != swap(&base) || sw.auc_roc != base.auc_roc || sw.accuracy != base.accuracy {
            return Err(format!("instance {i}: class swap is not symmetric"));
        }
        let c = base.confusion;
        if base.accuracy != (c.tp + c.tn) as f64 / base.n_eval as f64 {
            return Err(format!("instance {i}: accuracy disagrees with confusion counts"));
        }
    }
    Ok("AUC vectors exact; permutation, monotone-transform and class-swap invariants on 100 instances".into())
}

// --- 10: determinism -----------------------------------------------------------------

fn determinism() -> Outcome {
    let syn = lnmt::corpus::generate_synthetic(&SynthConfig {
        n_labeled: 60,
        n_val: 60,
        n_test: 60,
        n_unlabeled: 200,
        ..SynthConfig::benchmark(10)
    })
    .map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::desk(10);
    cfg.stage1.epochs = 6;
    cfg.stage2.generations = 4;
    let run = || -> lnmt::Result<(Vec<u8>, Vec<u8>, MetricsReport)> {
        let data = prepare_synthetic(&syn, &cfg)?;
        let s1 = train_stage1(&data, &cfg)?;
        let s2 = train_stage2(&data, &s1, &cfg)?;
        let scores = predict_split(&s2.model, &data.test.samples)?;
        Ok((s1.to_bytes()?, s2.to_bytes()?, compute_metrics(&scores, &data.test.gold()?)?))
    };
    let a = run().map_err(|e| e.to_string())?;
    let b = run().map_err(|e| e.to_string())?;
    if a != b {
        return Err("two identical runs differ".into());
    }

    let data = prepare_synthetic(&syn, &cfg).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let resumed = (|| -> lnmt::Result<(Vec<u8>, Vec<u8>)> {
        use lnmt::checkpoint::Checkpoint;
        use lnmt::trainer::{init_stage1, init_stage2, run_stage1, run_stage2};
        let p1 = dir.path().join("s1.ckpt");
        run_stage1(&data, init_stage1(&data, &cfg)?, Some(3))?.save(&p1)?;
        let s1 = run_stage1(&data, Checkpoint::load(&p1)?, None)?;
        let p2 = dir.path().join("s2.ckpt");
        run_stage2(&data, init_stage2(&data, &s1, &cfg)?, Some(2))?.save(&p2)?;
        let s2 = run_stage2(&data, Checkpoint::load(&p2)?, None)?;
        Ok((s1.to_bytes()?, s2.to_bytes()?))
    })()
    .map_err(|e| e.to_string())?;
    check(
        resumed.0 == a.0 && resumed.1 == a.1,
        format!(
            "two runs bitwise identical ({} + {} checkpoint bytes); resumed stage 1 and stage 2 equal the uninterrupted runs",
            a.0.len(),
            a.1.len()
        ),
    )
}

fn ablations(report: &mut impl FnMut(usize, &str, Outcome)) {
    let start = Instant::now();
    let manifest = run_ablation_suite(&AblationOptions::desk((0..5).collect()));
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    match &manifest {
        Ok(m) => {
            report(6, "ablation ordering", ablation_ordering(m, minutes));
            report(7, "emotion ablation", emotion_direction(m));
            report(8, "weak-label refinement", weak_label_refinement(m));
        }
        Err(e) => {
            for (n, name) in [(6, "ablation ordering"), (7, "emotion ablation"), (8, "weak-label refinement")] {
                report(n, name, Err(format!("ablation run failed: {e}")));
            }
        }
    }
}

fn main() {
    // Criterion numbers on the command line select a subset; none runs all.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, msg) = match outcome {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {msg}");
    };
    if wanted(1) {
        report(1, "gradient correctness", gradient_check());
    }
    if wanted(2) {
        report(2, "oracle equivalence", oracle_equivalence());
    }
    if wanted(3) {
        report(3, "propagation invariants", propagation_invariants());
    }
    if wanted(4) {
        report(4, "EMA closed form", ema_closed_form());
    }
    if wanted(5) {
        report(5, "reliability properties", reliability_properties());
    }

    if [6, 7, 8].into_iter().any(wanted) {
        ablations(&mut report);
    }
    if wanted(9) {
        report(9, "metrics exactness", metric_exactness());
    }
    if wanted(10) {
        report(10, "determinism", determinism());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
