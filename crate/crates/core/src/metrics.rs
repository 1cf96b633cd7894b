//! Accuracy, rank-statistic AUC and class-wise precision/recall/F1.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was predicted as this class, so precision and F1 are 0 by
    /// convention.
    pub empty_prediction: bool,
}

/// Counts with fake as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_eval: usize,
    pub accuracy: f64,
    /// Absent when only one class occurs in the labels.
    pub auc_roc: Option<f64>,
    pub fake: ClassMetrics,
    pub real: ClassMetrics,
    pub confusion: Confusion,
}

impl MetricsReport {
    /// Pretty JSON; keys follow field order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

fn class_metrics(tp: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        empty_prediction: tp + fp == 0,
    }
}

/// Probability that a random fake sample scores above a random real one,
/// ties counting one half. Computed from average ranks.
pub fn auc_roc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == Label::Fake).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based ranks of the positives, tied groups sharing their mean rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == Label::Fake).count();
        rank_sum += mean_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Metrics for fake-probability `scores` against `labels`, thresholded at
/// 0.5 (ties predict fake).
pub fn compute_metrics(scores: &[f64], labels: &[Label]) -> Result<MetricsReport> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Shape("no samples to evaluate".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            stage: format!("evaluation score {s}"),
        });
    }
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l) {
            (true, Label::Fake) => c.tp += 1,
            (true, Label::Real) => c.fp += 1,
            (false, Label::Real) => c.tn += 1,
            (false, Label::Fake) => c.fn_ += 1,
        }
    }
    let n = scores.len();
    Ok(MetricsReport {
        n_eval: n,
        accuracy: (c.tp + c.tn) as f64 / n as f64,
        auc_roc: auc_roc(scores, labels),
        fake: class_metrics(c.tp, c.fp, c.fn_),
        real: class_metrics(c.tn, c.fn_, c.fp),
        confusion: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake as F, Real as R};

    #[test]
    fn auc_examples() {
        let l = [F, F, R, R];
        assert_eq!(auc_roc(&[0.9, 0.8, 0.3, 0.1], &l), Some(1.0));
        assert_eq!(auc_roc(&[0.9, 0.3, 0.8, 0.1], &l), Some(0.75));
        assert_eq!(auc_roc(&[0.5; 4], &l), Some(0.5));
        assert_eq!(auc_roc(&[0.5, 0.2], &[F, F]), None);
    }

    #[test]
    fn perfect_report() {
        let m = compute_metrics(&[0.9, 0.8, 0.3, 0.1], &[F, F, R, R]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.fake.f1, 1.0);
        assert_eq!(m.confusion.total(), 4);
    }

    #[test]
    fn empty_prediction_class() {
        let m = compute_metrics(&[0.9, 0.8], &[F, R]).unwrap();
        assert!(m.real.empty_prediction);
        assert_eq!(m.real.f1, 0.0);
        assert_eq!(m.real.precision, 0.0);
        assert!(compute_metrics(&[0.9], &[F, R]).is_err());
    }

    #[test]
    fn single_sample_has_one_cell() {
        let m = compute_metrics(&[0.2], &[F]).unwrap();
        assert_eq!(m.confusion, Confusion { fn_: 1, ..Default::default() });
        assert_eq!(m.auc_roc, None);
    }

    #[test]
    fn json_key_order_is_stable() {
        let m = compute_metrics(&[0.9, 0.1], &[F, R]).unwrap();
        let j = m.to_json();
        let pos = |k: &str| j.find(k).unwrap();
        assert!(pos("\"n_eval\"") < pos("\"accuracy\"") && pos("\"accuracy\"") < pos("\"auc_roc\""));
        assert!(j.contains("\"fn\": 0"));
    }
}
