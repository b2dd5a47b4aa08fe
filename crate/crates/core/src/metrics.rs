//! Ranking and thresholded metrics for multi-label predictions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LABEL_NAMES, NUM_LABELS};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Area under the ROC curve as the Mann–Whitney statistic: the probability a
/// positive outscores a negative, ties counting one half. `None` when either
/// class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

/// Micro-averaged precision, recall and F1 over every cell, predicting
/// positive when `score >= threshold`.
pub fn prf1(scores: &[f64], labels: &[bool], threshold: f64) -> Result<(f64, f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(prf1_from_counts(tp, fp, fn_))
}

pub fn prf1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_label_auc: Vec<Option<f64>>,
    pub macro_auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub n_reports: usize,
}

/// Scores every label column of `probs` (one row per report) against `truth`.
/// Macro-AUC averages only the defined per-label values; it is 0.5 when none
/// is defined.
pub fn evaluate(probs: &[Vec<f64>], truth: &[[bool; NUM_LABELS]], threshold: f64) -> Result<EvalReport> {
    if probs.len() != truth.len() {
        return Err(Error::Invalid(format!("{} predictions for {} reports", probs.len(), truth.len())));
    }
    if let Some(bad) = probs.iter().find(|p| p.len() != NUM_LABELS) {
        return Err(Error::Invalid(format!("prediction with {} labels", bad.len())));
    }
    let mut per_label_auc = Vec::with_capacity(NUM_LABELS);
    for k in 0..NUM_LABELS {
        let s: Vec<f64> = probs.iter().map(|p| p[k]).collect();
        let l: Vec<bool> = truth.iter().map(|t| t[k]).collect();
        per_label_auc.push(roc_auc(&s, &l)?);
    }
    let defined: Vec<f64> = per_label_auc.iter().flatten().copied().collect();
    let macro_auc = if defined.is_empty() {
        0.5
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let flat_s: Vec<f64> = probs.iter().flatten().copied().collect();
    let flat_l: Vec<bool> = truth.iter().flatten().copied().collect();
    let (precision, recall, f1) = prf1(&flat_s, &flat_l, threshold)?;
    Ok(EvalReport {
        per_label_auc,
        macro_auc,
        precision,
        recall,
        f1,
        threshold,
        n_reports: probs.len(),
    })
}

impl EvalReport {
    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = LABEL_NAMES.iter().map(|n| n.len()).max().unwrap_or(0);
        for (name, auc) in LABEL_NAMES.iter().zip(&self.per_label_auc) {
            let v = auc.map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(out, "{name:<width$}  {v:>6}");
        }
        let _ = writeln!(out, "{:<width$}  {:>6.4}", "Average AUC", self.macro_auc);
        let _ = writeln!(out, "{:<width$}  {:>6.4}", "Precision", self.precision);
        let _ = writeln!(out, "{:<width$}  {:>6.4}", "Recall", self.recall);
        let _ = writeln!(out, "{:<width$}  {:>6.4}", "F1", self.f1);
        out
    }

    /// One `key=value` record per line.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for (name, auc) in LABEL_NAMES.iter().zip(&self.per_label_auc) {
            let v = auc.map_or_else(|| "nan".to_string(), |a| a.to_string());
            let _ = writeln!(out, "metric=auc\tlabel={}\tvalue={v}", name.replace(' ', "_"));
        }
        for (k, v) in [
            ("macro_auc", self.macro_auc),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("threshold", self.threshold),
        ] {
            let _ = writeln!(out, "metric={k}\tvalue={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[0.2, 0.8], &[true, false]).unwrap(), Some(0.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.7], &[true, true]).unwrap(), None);
        assert!(roc_auc(&[0.5], &[true, false]).is_err());
    }

    #[test]
    fn prf1_examples() {
        let l = [true, false, true, false];
        assert_eq!(prf1(&[0.9, 0.1, 0.8, 0.2], &l, 0.5).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(prf1(&[0.1, 0.1, 0.1, 0.1], &l, 0.5).unwrap(), (0.0, 0.0, 0.0));
        let (p, r, f) = prf1_from_counts(2, 1, 1);
        assert!((p - 2.0 / 3.0).abs() < 1e-15 && (r - 2.0 / 3.0).abs() < 1e-15 && (f - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(prf1_from_counts(0, 0, 0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn macro_skips_undefined_labels() {
        let mut t0 = [false; NUM_LABELS];
        let t1 = [false; NUM_LABELS];
        t0[2] = true;
        let mut p0 = vec![0.1; NUM_LABELS];
        p0[2] = 0.9;
        let r = evaluate(&[p0, vec![0.2; NUM_LABELS]], &[t0, t1], 0.5).unwrap();
        assert_eq!(r.per_label_auc.iter().flatten().count(), 1);
        assert_eq!(r.macro_auc, 1.0);
        assert!(r.to_table().contains("Average AUC"));
        assert!(r.to_records().contains("metric=macro_auc\tvalue=1"));
    }
}
