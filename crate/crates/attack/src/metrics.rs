//! Confusion-matrix construction, the five attack metrics, ROC sweeps and
//! their CSV exports.
//!
//! Metrics whose denominators can vanish return `Option<f64>`: `None` is the
//! explicit "undefined" marker and is never silently folded into a number.
//! The correlation coefficient keeps the zero-denominator-is-zero
//! convention, matching its random-guesser semantics.

use crate::classifier::apply_threshold;
use crate::error::{AttackError, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: u64,
    pub true_neg: u64,
    pub false_pos: u64,
    pub false_neg: u64,
}

impl ConfusionMatrix {
    pub fn new(true_pos: u64, true_neg: u64, false_pos: u64, false_neg: u64) -> Self {
        Self { true_pos, true_neg, false_pos, false_neg }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn accuracy(&self) -> Option<f64> {
        match self.total() {
            0 => None,
            n => Some((self.true_pos + self.true_neg) as f64 / n as f64),
        }
    }

    pub fn precision(&self) -> Option<f64> {
        match self.true_pos + self.false_pos {
            0 => None,
            d => Some(self.true_pos as f64 / d as f64),
        }
    }

    pub fn recall(&self) -> Option<f64> {
        match self.true_pos + self.false_neg {
            0 => None,
            d => Some(self.true_pos as f64 / d as f64),
        }
    }

    pub fn f1(&self) -> Option<f64> {
        let (pr, re) = (self.precision()?, self.recall()?);
        if pr + re == 0.0 {
            return None;
        }
        Some(2.0 * pr * re / (pr + re))
    }

    /// Correlation between predicted and true labels in `[-1, 1]`; returns 0
    /// when any denominator factor vanishes (random-guesser convention).
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.true_pos as f64,
            self.true_neg as f64,
            self.false_pos as f64,
            self.false_neg as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        match self.false_pos + self.true_neg {
            0 => None,
            d => Some(self.false_pos as f64 / d as f64),
        }
    }
}

/// Counts predictions against labels at acceptance threshold `theta`
/// (ties accept).
pub fn confusion(probabilities: &[f64], labels: &[bool], theta: f64) -> Result<ConfusionMatrix> {
    if probabilities.is_empty() || probabilities.len() != labels.len() {
        return Err(AttackError::LengthMismatch { probs: probabilities.len(), labels: labels.len() });
    }
    let mut cm = ConfusionMatrix::new(0, 0, 0, 0);
    for (&p, &y) in probabilities.iter().zip(labels) {
        match (apply_threshold(p, theta)?, y) {
            (true, true) => cm.true_pos += 1,
            (true, false) => cm.false_pos += 1,
            (false, true) => cm.false_neg += 1,
            (false, false) => cm.true_neg += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub theta: f64,
    pub fpr: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,fpr,recall\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.theta, p.fpr, p.recall));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())
    }
}

/// The default acceptance-threshold sweep 0.1, 0.2, ..., 0.9.
pub fn default_theta_sweep() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Recall versus false-positive rate over an ascending threshold sweep.
/// Requires both classes present so every point is defined.
pub fn roc_curve(probabilities: &[f64], labels: &[bool], thetas: &[f64]) -> Result<RocCurve> {
    if thetas.is_empty() {
        return Err(AttackError::BadThetaSweep);
    }
    for w in thetas.windows(2) {
        if w[1] <= w[0] {
            return Err(AttackError::BadThetaSweep);
        }
    }
    let mut points = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let cm = confusion(probabilities, labels, theta)?;
        let fpr = cm.false_positive_rate().ok_or(AttackError::OneClassOnly)?;
        let recall = cm.recall().ok_or(AttackError::OneClassOnly)?;
        points.push(RocPoint { theta, fpr, recall });
    }
    // Raising the threshold can only shrink the accepted set.
    for w in points.windows(2) {
        debug_assert!(w[1].fpr <= w[0].fpr && w[1].recall <= w[0].recall);
    }
    Ok(RocCurve { points })
}

/// Threshold with the highest accuracy; ties break toward the one closest
/// to 0.5, then toward the smaller value.
pub fn best_threshold(per_theta_accuracy: &[(f64, f64)]) -> Result<f64> {
    if per_theta_accuracy.is_empty() {
        return Err(AttackError::Empty("threshold sweep"));
    }
    let mut best = per_theta_accuracy[0];
    for &(theta, acc) in &per_theta_accuracy[1..] {
        let better = acc > best.1;
        let tie = acc == best.1;
        let closer = (theta - 0.5).abs() < (best.0 - 0.5).abs();
        let equally_close = (theta - 0.5).abs() == (best.0 - 0.5).abs();
        if better || (tie && (closer || (equally_close && theta < best.0))) {
            best = (theta, acc);
        }
    }
    Ok(best.0)
}

/// One exported metrics row: experiment coordinates plus the five metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub env: String,
    pub mode: String,
    pub t_max: usize,
    pub clip_len: usize,
    /// Pairs per stack in collective mode; 1 in individual mode.
    pub m: usize,
    pub theta: f64,
    pub seed: u64,
    pub acc: Option<f64>,
    pub pr: Option<f64>,
    pub re: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: f64,
}

impl MetricRow {
    pub fn from_confusion(
        env: &str,
        mode: &str,
        t_max: usize,
        clip_len: usize,
        m: usize,
        theta: f64,
        seed: u64,
        cm: &ConfusionMatrix,
    ) -> Self {
        Self {
            env: env.to_string(),
            mode: mode.to_string(),
            t_max,
            clip_len,
            m,
            theta,
            seed,
            acc: cm.accuracy(),
            pr: cm.precision(),
            re: cm.recall(),
            f1: cm.f1(),
            mcc: cm.mcc(),
        }
    }
}

pub const METRICS_CSV_HEADER: &str = "env,mode,t_max,clip_len,m,theta,seed,acc,pr,re,f1,mcc";

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "undefined".to_string(),
    }
}

pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.env,
            r.mode,
            r.t_max,
            r.clip_len,
            r.m,
            r.theta,
            r.seed,
            opt(r.acc),
            opt(r.pr),
            opt(r.re),
            opt(r.f1),
            r.mcc
        ));
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(metrics_to_csv(rows).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier_maxes_every_metric() {
        let cm = ConfusionMatrix::new(1, 1, 0, 0);
        assert_eq!(cm.accuracy(), Some(1.0));
        assert_eq!(cm.precision(), Some(1.0));
        assert_eq!(cm.recall(), Some(1.0));
        assert_eq!(cm.f1(), Some(1.0));
        assert_eq!(cm.mcc(), 1.0);
    }

    #[test]
    fn balanced_confusion_gives_zero_correlation() {
        let cm = ConfusionMatrix::new(1, 1, 1, 1);
        assert_eq!(cm.mcc(), 0.0);
    }

    #[test]
    fn worked_example_matches_the_formulas() {
        // TP=3, TN=2, FP=1, FN=1: ACC 5/7, PR 3/4, RE 3/4, F1 3/4,
        // MCC (6-1)/sqrt(4*4*3*3) = 5/12.
        let cm = ConfusionMatrix::new(3, 2, 1, 1);
        assert!((cm.accuracy().unwrap() - 5.0 / 7.0).abs() < 1e-15);
        assert!((cm.precision().unwrap() - 0.75).abs() < 1e-15);
        assert!((cm.recall().unwrap() - 0.75).abs() < 1e-15);
        assert!((cm.f1().unwrap() - 0.75).abs() < 1e-15);
        assert!((cm.mcc() - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn undefined_metrics_stay_undefined() {
        let cm = ConfusionMatrix::new(0, 5, 0, 0);
        assert_eq!(cm.precision(), None);
        assert_eq!(cm.recall(), None);
        assert_eq!(cm.f1(), None);
        assert_eq!(cm.mcc(), 0.0, "zero-denominator convention");
        assert!(metrics_to_csv(&[MetricRow::from_confusion(
            "e", "individual", 1, 1, 1, 0.5, 0, &cm
        )])
        .contains("undefined"));
    }

    #[test]
    fn ties_accept_at_the_threshold() {
        let cm = confusion(&[0.5, 0.5], &[true, false], 0.5).unwrap();
        assert_eq!((cm.true_pos, cm.false_pos, cm.true_neg, cm.false_neg), (1, 1, 0, 0));
    }

    #[test]
    fn simple_counts() {
        let cm = confusion(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!((cm.true_pos, cm.true_neg, cm.false_pos, cm.false_neg), (1, 1, 0, 0));
    }

    #[test]
    fn roc_extremes_hit_the_corners() {
        let probs = [0.3, 0.6, 0.7, 0.4];
        let labels = [true, true, false, false];
        let curve = roc_curve(&probs, &labels, &[0.01, 0.5, 0.99]).unwrap();
        assert_eq!((curve.points[0].fpr, curve.points[0].recall), (1.0, 1.0));
        assert_eq!(
            (curve.points.last().unwrap().fpr, curve.points.last().unwrap().recall),
            (0.0, 0.0)
        );
    }

    #[test]
    fn best_threshold_tie_breaks_toward_center() {
        let flat: Vec<(f64, f64)> = default_theta_sweep().into_iter().map(|t| (t, 0.7)).collect();
        assert_eq!(best_threshold(&flat).unwrap(), 0.5);
        assert_eq!(best_threshold(&[(0.3, 0.9)]).unwrap(), 0.3);
        let peaked: Vec<(f64, f64)> =
            default_theta_sweep().into_iter().map(|t| (t, if t == 0.3 { 0.9 } else { 0.6 })).collect();
        assert_eq!(best_threshold(&peaked).unwrap(), 0.3);
    }
}
