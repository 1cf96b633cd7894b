//! Teacher/student machinery for weak-label refinement: EMA updates,
//! IoU label similarity between the two networks' hard predictions, label
//! propagation, class-likelihood vectors, MMD-based reliability and the
//! credibility-weighted loss.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{bce_loss, forward_train, predict, EncoderParams};
use crate::error::{Error, Result};
use crate::features::EncodedSample;
use crate::linalg::{dot, softmax_in_place};

/// Teacher and student copies of the baseline model.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherStudent {
    pub teacher: EncoderParams,
    pub student: EncoderParams,
    /// EMA momentum `alpha`.
    pub momentum: f64,
}

impl TeacherStudent {
    /// Both networks start as copies of the pre-trained model.
    pub fn new(pretrained: &EncoderParams, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1]")));
        }
        Ok(Self {
            teacher: pretrained.clone(),
            student: pretrained.clone(),
            momentum,
        })
    }

    pub fn ema_update(&mut self) -> Result<()> {
        ema_update(&mut self.teacher, &self.student, self.momentum)
    }
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, elementwise.
pub fn ema_update(teacher: &mut EncoderParams, student: &EncoderParams, alpha: f64) -> Result<()> {
    let beta = 1.0 - alpha;
    teacher.zip_apply(student, |t, s| {
        for (a, b) in t.iter_mut().zip(s) {
            *a = alpha * *a + beta * b;
        }
    })
}

/// Ties go to fake.
#[inline]
pub fn hard_label(p: f64) -> Label {
    Label::from_bit(p >= 0.5)
}

/// Soft and hard predictions plus reinforced features of one network over
/// the unlabeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutputs {
    pub soft: Vec<f64>,
    pub hard: Vec<Label>,
    pub features: Vec<Vec<f64>>,
}

/// Read-only pass of `model` over `samples`.
pub fn refresh_predictions(model: &EncoderParams, samples: &[EncodedSample]) -> Result<NetworkOutputs> {
    let mut soft = Vec::with_capacity(samples.len());
    let mut hard = Vec::with_capacity(samples.len());
    let mut features = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = predict(s, model)?;
        soft.push(pred.p);
        hard.push(hard_label(pred.p));
        features.push(pred.f_c);
    }
    Ok(NetworkOutputs {
        soft,
        hard,
        features,
    })
}

/// Like [`refresh_predictions`] but with dropout active, each sample drawing
/// its masks from `rng` in order.
pub fn refresh_predictions_perturbed(
    model: &EncoderParams,
    samples: &[EncodedSample],
    rng: &mut ChaCha8Rng,
) -> Result<NetworkOutputs> {
    let mut out = NetworkOutputs {
        soft: Vec::with_capacity(samples.len()),
        hard: Vec::with_capacity(samples.len()),
        features: Vec::with_capacity(samples.len()),
    };
    for s in samples {
        let t = forward_train(s, model, rng)?;
        out.soft.push(t.p);
        out.hard.push(hard_label(t.p));
        out.features.push(t.f_c);
    }
    Ok(out)
}

/// 2x2 IoU agreement between student (rows) and teacher (columns) hard
/// labels, before and after row normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSimilarityMatrix {
    pub raw: [[f64; 2]; 2],
    pub normalized: [[f64; 2]; 2],
}

impl LabelSimilarityMatrix {
    pub fn identity() -> Self {
        let eye = [[1.0, 0.0], [0.0, 1.0]];
        Self {
            raw: eye,
            normalized: eye,
        }
    }

    /// Row-normalized matrix; a row of zeros becomes the identity row.
    pub fn from_raw(raw: [[f64; 2]; 2]) -> Self {
        let mut normalized = raw;
        for (m, row) in normalized.iter_mut().enumerate() {
            let s = row[0] + row[1];
            if s > 0.0 {
                row[0] /= s;
                row[1] /= s;
            } else {
                *row = [0.0, 0.0];
                row[m] = 1.0;
            }
        }
        Self { raw, normalized }
    }
}

/// `C[m][n] = |{s = m and t = n}| / |{s = m or t = n}|`, empty unions
/// counting as 0, then row-normalized.
pub fn label_similarity(hard_s: &[Label], hard_t: &[Label]) -> Result<LabelSimilarityMatrix> {
    if hard_s.len() != hard_t.len() {
        return Err(Error::Shape(format!(
            "student has {} labels, teacher {}",
            hard_s.len(),
            hard_t.len()
        )));
    }
    let mut joint = [[0usize; 2]; 2];
    let mut s_count = [0usize; 2];
    let mut t_count = [0usize; 2];
    for (s, t) in hard_s.iter().zip(hard_t) {
        joint[s.index()][t.index()] += 1;
        s_count[s.index()] += 1;
        t_count[t.index()] += 1;
    }
    let mut raw = [[0.0; 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            let inter = joint[m][n];
            let union = s_count[m] + t_count[n] - inter;
            raw[m][n] = if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
        }
    }
    Ok(LabelSimilarityMatrix::from_raw(raw))
}

const ROW_TOL: f64 = 1e-9;

fn check_row_stochastic(c: &[[f64; 2]; 2]) -> Result<()> {
    for (m, row) in c.iter().enumerate() {
        if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || ((row[0] + row[1]) - 1.0).abs() > ROW_TOL {
            return Err(Error::NotRowStochastic(format!("row {m} = {row:?}")));
        }
    }
    Ok(())
}

/// Refined pair `[1 - y', y'] = (1 - beta) [1 - y_s, y_s] C + beta [1 - y, y]`.
pub fn propagate_pair(y_u: f64, y_us: f64, c: &[[f64; 2]; 2], beta: f64) -> Result<[f64; 2]> {
    check_row_stochastic(c)?;
    for y in [y_u, y_us] {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::LabelRange(y));
        }
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("propagation rate {beta} outside [0, 1]")));
    }
    let s = [1.0 - y_us, y_us];
    let keep = 1.0 - beta;
    Ok([
        keep * (s[0] * c[0][0] + s[1] * c[1][0]) + beta * (1.0 - y_u),
        keep * (s[0] * c[0][1] + s[1] * c[1][1]) + beta * y_u,
    ])
}

/// Second component of [`propagate_pair`]: the refined weak label.
pub fn propagate(y_u: f64, y_us: f64, c: &[[f64; 2]; 2], beta: f64) -> Result<f64> {
    propagate_pair(y_u, y_us, c, beta).map(|p| p[1].clamp(0.0, 1.0))
}

/// Per-class mean reinforced feature. Row 0 is real, row 1 fake.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters {
    pub rows: [Vec<f64>; 2],
    /// Set for a class no sample was assigned to; its row is the global
    /// mean instead.
    pub fallback: [bool; 2],
}

pub fn class_centers(features: &[Vec<f64>], hard: &[Label]) -> Result<ClassCenters> {
    if features.is_empty() {
        return Err(Error::Shape("class centers need at least one sample".into()));
    }
    if features.len() != hard.len() {
        return Err(Error::Shape(format!(
            "{} features for {} labels",
            features.len(),
            hard.len()
        )));
    }
    let dim = features[0].len();
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for (f, l) in features.iter().zip(hard) {
        if f.len() != dim {
            return Err(Error::Shape("ragged feature vectors".into()));
        }
        for (s, x) in sums[l.index()].iter_mut().zip(f) {
            *s += x;
        }
        counts[l.index()] += 1;
    }
    let n = features.len() as f64;
    let global: Vec<f64> = (0..dim).map(|k| (sums[0][k] + sums[1][k]) / n).collect();
    let mut fallback = [false; 2];
    let [s0, s1] = sums;
    let mut rows = [s0, s1];
    for m in 0..2 {
        if counts[m] == 0 {
            fallback[m] = true;
            log::warn!(
                "no unlabeled sample predicted {:?}; using the global mean as its center",
                Label::from_bit(m == 1)
            );
            rows[m] = global.clone();
        } else {
            let c = counts[m] as f64;
            rows[m].iter_mut().for_each(|x| *x /= c);
        }
    }
    Ok(ClassCenters { rows, fallback })
}

/// `softmax([c_0 . f, c_1 . f])`
pub fn class_likelihood(f: &[f64], centers: &ClassCenters) -> [f64; 2] {
    let mut q = [dot(&centers.rows[0], f), dot(&centers.rows[1], f)];
    softmax_in_place(&mut q);
    q
}

/// Label uncertainty and the resulting credibility weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub u: f64,
    pub omega: f64,
}

/// MMD with a Gaussian kernel between the single-sample distributions at
/// `q_t` and `q_s`: `sqrt(2 - 2 k(q_t, q_s))`, and `omega = exp(-u)`.
pub fn uncertainty(q_t: &[f64], q_s: &[f64], sigma: f64) -> Result<Reliability> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("kernel bandwidth {sigma} must be > 0")));
    }
    if q_t.len() != q_s.len() {
        return Err(Error::Shape("likelihood vectors differ in length".into()));
    }
    let d2: f64 = q_t.iter().zip(q_s).map(|(a, b)| (a - b) * (a - b)).sum();
    let k = (-d2 / (2.0 * sigma * sigma)).exp();
    let u = (2.0 - 2.0 * k).max(0.0).sqrt();
    Ok(Reliability {
        u,
        omega: (-u).exp(),
    })
}

/// Alternative consistency measure on raw reinforced features (RMS
/// difference). Diagnostic only.
pub fn feature_distance_uncertainty(f_t: &[f64], f_s: &[f64]) -> Reliability {
    let n = f_t.len().max(1) as f64;
    let u = (f_t.iter().zip(f_s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
    Reliability {
        u,
        omega: (-u).exp(),
    }
}

/// One unlabeled term of the credibility-aware loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTarget {
    pub y: f64,
    pub p: f64,
    pub omega: f64,
}

/// `mean_i -omega_i [y_i log p_i + (1 - y_i) log(1 - p_i)]`
pub fn credibility_loss(batch: &[WeightedTarget]) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for t in batch {
        if !(t.omega > 0.0 && t.omega <= 1.0) {
            return Err(Error::Config(format!("credibility {} outside (0, 1]", t.omega)));
        }
        total += t.omega * bce_loss(t.p, t.y)?;
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityMode {
    /// MMD between class-likelihood vectors.
    #[default]
    ClassLikelihood,
    /// Distance between raw reinforced features.
    FeatureDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Label propagation rate.
    pub beta: f64,
    /// Gaussian kernel bandwidth.
    pub sigma: f64,
    pub use_lp: bool,
    pub use_lr: bool,
    pub reliability: ReliabilityMode,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            beta: 0.9,
            sigma: 1.0,
            use_lp: true,
            use_lr: true,
            reliability: ReliabilityMode::ClassLikelihood,
        }
    }
}

/// Per-unlabeled-sample refinement state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeakLabelState {
    /// Current soft weak labels.
    pub y_u: Vec<f64>,
    pub p_t: Vec<f64>,
    pub p_s: Vec<f64>,
    pub hard_t: Vec<Label>,
    pub hard_s: Vec<Label>,
    pub q_t: Vec<[f64; 2]>,
    pub q_s: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub omega: Vec<f64>,
}

impl WeakLabelState {
    /// Initial state: weak labels are the pre-trained model's soft
    /// predictions, all weights 1.
    pub fn from_predictions(initial: &[f64]) -> Self {
        let n = initial.len();
        Self {
            y_u: initial.to_vec(),
            p_t: initial.to_vec(),
            p_s: initial.to_vec(),
            hard_t: initial.iter().map(|&p| hard_label(p)).collect(),
            hard_s: initial.iter().map(|&p| hard_label(p)).collect(),
            q_t: vec![[0.5, 0.5]; n],
            q_s: vec![[0.5, 0.5]; n],
            u: vec![0.0; n],
            omega: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.y_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_u.is_empty()
    }

    pub fn mean_omega(&self) -> f64 {
        if self.omega.is_empty() {
            return 1.0;
        }
        self.omega.iter().sum::<f64>() / self.omega.len() as f64
    }
}

/// Weak-label quality against hidden truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakLabelAccuracy {
    /// Mean probability mass on the true class, `1 - mean |y_u - y|`.
    pub soft: f64,
    /// Fraction of `1[y_u >= 0.5]` equal to the true label.
    pub hard: f64,
}

pub fn weak_label_accuracy(y_u: &[f64], truth: &[Label]) -> Option<WeakLabelAccuracy> {
    if y_u.is_empty() || y_u.len() != truth.len() {
        return None;
    }
    let n = y_u.len() as f64;
    let soft = 1.0 - y_u.iter().zip(truth).map(|(y, t)| (y - t.as_f64()).abs()).sum::<f64>() / n;
    let hard = y_u
        .iter()
        .zip(truth)
        .filter(|(y, t)| hard_label(**y) == **t)
        .count() as f64
        / n;
    Some(WeakLabelAccuracy { soft, hard })
}

/// What one refinement pass produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub similarity: LabelSimilarityMatrix,
    pub mean_omega: f64,
    pub center_fallback: [[bool; 2]; 2],
    pub weak_label_accuracy: Option<WeakLabelAccuracy>,
    /// Mean credibility of samples whose hard weak label is right, then
    /// wrong. Needs hidden truth; a side with no samples is `None`.
    pub omega_by_correctness: Option<[Option<f64>; 2]>,
}

fn omega_by_correctness(state: &WeakLabelState, truth: &[Label]) -> Option<[Option<f64>; 2]> {
    if truth.len() != state.len() {
        return None;
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for ((&y, &w), &t) in state.y_u.iter().zip(&state.omega).zip(truth) {
        let k = usize::from(hard_label(y) != t);
        sums[k] += w;
        counts[k] += 1;
    }
    Some([0, 1].map(|k| (counts[k] > 0).then(|| sums[k] / counts[k] as f64)))
}

/// Steps before one stage-2 epoch: refresh both networks on the unlabeled
/// set, compute `C`, refine the teacher's soft labels, and compute
/// per-sample credibility. The epoch itself is run by the trainer.
pub fn generation_step(
    ts: &TeacherStudent,
    unlabeled: &[EncodedSample],
    state: &mut WeakLabelState,
    opts: &RefineOptions,
    truth: Option<&[Label]>,
) -> Result<RefinementSummary> {
    let teacher = refresh_predictions(&ts.teacher, unlabeled)?;
    let student = refresh_predictions(&ts.student, unlabeled)?;
    refine_from_outputs(&teacher, &student, None, state, opts, truth)
}

/// [`generation_step`] on precomputed network outputs. When `perturbed`
/// (teacher, student) is given, class centers, likelihoods and reliability
/// come from it; weak labels and the similarity matrix never do.
pub fn refine_from_outputs(
    teacher: &NetworkOutputs,
    student: &NetworkOutputs,
    perturbed: Option<(&NetworkOutputs, &NetworkOutputs)>,
    state: &mut WeakLabelState,
    opts: &RefineOptions,
    truth: Option<&[Label]>,
) -> Result<RefinementSummary> {
    let n = teacher.soft.len();
    if student.soft.len() != n {
        return Err(Error::Shape("teacher and student saw different sample counts".into()));
    }
    let similarity = label_similarity(&student.hard, &teacher.hard)?;

    let mut y_u = teacher.soft.clone();
    if opts.use_lp {
        for (y, &ys) in y_u.iter_mut().zip(&student.soft) {
            *y = propagate(*y, ys, &similarity.normalized, opts.beta)?;
        }
    }

    let mut q_t = vec![[0.5, 0.5]; n];
    let mut q_s = vec![[0.5, 0.5]; n];
    let mut u = vec![0.0; n];
    let mut omega = vec![1.0; n];
    let mut center_fallback = [[false; 2]; 2];
    let (rt, rs) = perturbed.unwrap_or((teacher, student));
    if rt.soft.len() != n || rs.soft.len() != n {
        return Err(Error::Shape("perturbed outputs cover a different sample count".into()));
    }
    if n > 0 {
        let ct = class_centers(&rt.features, &rt.hard)?;
        let cs = class_centers(&rs.features, &rs.hard)?;
        center_fallback = [ct.fallback, cs.fallback];
        for i in 0..n {
            q_t[i] = class_likelihood(&rt.features[i], &ct);
            q_s[i] = class_likelihood(&rs.features[i], &cs);
            let r = match opts.reliability {
                ReliabilityMode::ClassLikelihood => uncertainty(&q_t[i], &q_s[i], opts.sigma)?,
                ReliabilityMode::FeatureDistance => {
                    feature_distance_uncertainty(&rt.features[i], &rs.features[i])
                }
            };
            u[i] = r.u;
            if opts.use_lr {
                omega[i] = r.omega;
            }
        }
    }

    *state = WeakLabelState {
        y_u,
        p_t: teacher.soft.clone(),
        p_s: student.soft.clone(),
        hard_t: teacher.hard.clone(),
        hard_s: student.hard.clone(),
        q_t,
        q_s,
        u,
        omega,
    };
    Ok(RefinementSummary {
        similarity,
        mean_omega: state.mean_omega(),
        center_fallback,
        weak_label_accuracy: truth.and_then(|t| weak_label_accuracy(&state.y_u, t)),
        omega_by_correctness: truth.and_then(|t| omega_by_correctness(state, t)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Fake as F, Real as R};

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_bit(b == 1)).collect()
    }

    #[test]
    fn ema_scalar_examples() {
        let step = |t: f64, s: f64, a: f64| a * t + (1.0 - a) * s;
        assert!((step(1.0, 0.0, 0.999) - 0.999).abs() < 1e-15);
        let mut t = 1.0;
        for _ in 0..3 {
            t = step(t, 0.0, 0.9);
        }
        assert!((t - 0.729).abs() < 1e-12);
    }

    #[test]
    fn perfect_agreement_gives_identity() {
        let l = labels(&[0, 1, 1, 0, 1]);
        let c = label_similarity(&l, &l).unwrap();
        assert_eq!(c.raw, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(c.normalized, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn worked_similarity_example() {
        let c = label_similarity(&labels(&[0, 0, 1, 1]), &labels(&[0, 1, 1, 1])).unwrap();
        assert_eq!(c.raw, [[0.5, 0.25], [0.0, 2.0 / 3.0]]);
        assert!((c.normalized[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.normalized[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.normalized[1], [0.0, 1.0]);
    }

    #[test]
    fn absent_student_class_gets_identity_row() {
        let c = label_similarity(&[F, F, F], &[R, F, F]).unwrap();
        assert_eq!(c.normalized[0], [1.0, 0.0]);
        assert!(label_similarity(&[F], &[F, R]).is_err());
    }

    #[test]
    fn propagate_examples() {
        let c = [[2.0 / 3.0, 1.0 / 3.0], [0.0, 1.0]];
        let y = propagate(0.8, 0.6, &c, 0.9).unwrap();
        assert!((y - 0.793_333_333_333_333_3).abs() < 1e-12, "{y}");
        assert_eq!(propagate(0.37, 0.9, &c, 1.0).unwrap(), 0.37);
        let eye = [[1.0, 0.0], [0.0, 1.0]];
        assert!((propagate(0.42, 0.42, &eye, 0.3).unwrap() - 0.42).abs() < 1e-15);
        assert!(matches!(
            propagate(0.5, 0.5, &[[0.5, 0.6], [0.0, 1.0]], 0.9),
            Err(Error::NotRowStochastic(_))
        ));
    }

    #[test]
    fn centers_and_fallback() {
        let f = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        let c = class_centers(&f, &[R, F]).unwrap();
        assert_eq!(c.rows[0], f[0]);
        assert_eq!(c.rows[1], f[1]);
        let c = class_centers(&f, &[F, F]).unwrap();
        assert!(c.fallback[0] && !c.fallback[1]);
        assert_eq!(c.rows[0], vec![2.0, 0.5]);
    }

    #[test]
    fn likelihood_examples() {
        let centers = ClassCenters {
            rows: [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            fallback: [false; 2],
        };
        let q = class_likelihood(&[1.0, 0.0, 0.0], &centers);
        let e = std::f64::consts::E;
        assert!((q[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((q[0] - 0.731_059).abs() < 1e-6);
        assert_eq!(class_likelihood(&[0.0, 0.0, 5.0], &centers), [0.5, 0.5]);
    }

    #[test]
    fn uncertainty_examples() {
        let r = uncertainty(&[0.3, 0.7], &[0.3, 0.7], 1.0).unwrap();
        assert_eq!((r.u, r.omega), (0.0, 1.0));
        let r = uncertainty(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert!((r.u - 1.124_384_8).abs() < 1e-6);
        assert!((r.omega - 0.324_852_3).abs() < 1e-6);
        assert!(uncertainty(&[1.0, 0.0], &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn credibility_loss_examples() {
        let l = credibility_loss(&[WeightedTarget {
            y: 1.0,
            p: 0.5,
            omega: 0.5,
        }])
        .unwrap();
        assert!((l - 0.346_574).abs() < 1e-6);
        let batch: Vec<_> = [(1.0, 0.3), (0.0, 0.8), (0.4, 0.4)]
            .iter()
            .map(|&(y, p)| WeightedTarget { y, p, omega: 1.0 })
            .collect();
        let plain: f64 = batch.iter().map(|t| bce_loss(t.p, t.y).unwrap()).sum::<f64>() / 3.0;
        assert_eq!(credibility_loss(&batch).unwrap(), plain);
        assert!(credibility_loss(&[WeightedTarget { y: 1.0, p: 0.5, omega: 0.0 }]).is_err());
    }

    #[test]
    fn refinement_without_lp_keeps_teacher_labels() {
        let teacher = NetworkOutputs {
            soft: vec![0.9, 0.2, 0.6],
            hard: vec![F, R, F],
            features: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
        };
        let student = NetworkOutputs {
            soft: vec![0.7, 0.4, 0.3],
            hard: vec![F, R, R],
            features: vec![vec![0.9, 0.1], vec![0.1, 0.8], vec![0.2, 0.6]],
        };
        let mut state = WeakLabelState::default();
        let opts = RefineOptions {
            use_lp: false,
            use_lr: false,
            ..RefineOptions::default()
        };
        refine_from_outputs(&teacher, &student, None, &mut state, &opts, None).unwrap();
        assert_eq!(state.y_u, teacher.soft);
        assert!(state.omega.iter().all(|&w| w == 1.0));

        let truth = [F, R, F];
        let s = refine_from_outputs(&teacher, &student, None, &mut state, &RefineOptions::default(), Some(&truth))
            .unwrap();
        assert_ne!(state.y_u, teacher.soft);
        assert!(state.omega.iter().all(|&w| w > 0.0 && w <= 1.0));
        assert!(s.weak_label_accuracy.is_some());
    }

    proptest! {
        #[test]
        fn uncertainty_symmetric_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let qa = [a, 1.0 - a];
            let qb = [b, 1.0 - b];
            let x = uncertainty(&qa, &qb, 1.0).unwrap();
            let y = uncertainty(&qb, &qa, 1.0).unwrap();
            prop_assert_eq!(x, y);
            prop_assert!(x.omega > (-(2.0f64).sqrt()).exp() && x.omega <= 1.0);
        }

        #[test]
        fn propagate_pair_sums_to_one(y in 0.0f64..=1.0, ys in 0.0f64..=1.0,
                                      c0 in 0.0f64..=1.0, c1 in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
            let c = [[c0, 1.0 - c0], [c1, 1.0 - c1]];
            let p = propagate_pair(y, ys, &c, beta).unwrap();
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p[1]));
        }
    }
}
