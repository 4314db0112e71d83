//! Confusion counts, classification metrics and ROC curves over similarity
//! distributions.
//!
//! A pair is predicted "same identity" when its `s_max >= lambda`. A sample
//! exactly on the threshold is a positive prediction, so `tp + fn` and
//! `fp + tn` always partition the auto and cross sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::SimilarityDistributions;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no auto samples to evaluate")]
    NoAutoSamples,
    #[error("no cross samples to evaluate")]
    NoCrossSamples,
    #[error("roc sweep needs at least 2 points, got {0}")]
    TooFewPoints(usize),
}

fn check(dist: &SimilarityDistributions) -> Result<(), EvalError> {
    if dist.auto_samples.is_empty() {
        return Err(EvalError::NoAutoSamples);
    }
    if dist.cross_samples.is_empty() {
        return Err(EvalError::NoCrossSamples);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub lambda: f64,
}

/// Which denominator the true-positive rate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TprDenominator {
    /// `tp / (tp + fn + ε)`: recall, the usual ROC ordinate.
    #[default]
    Standard,
    /// `tp / (tp + fp + ε)`: the precision-style variant.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub counts: ConfusionCounts,
}

fn ratio(num: usize, den: usize, eps: f64) -> f64 {
    let d = den as f64 + eps;
    if d == 0.0 {
        0.0
    } else {
        num as f64 / d
    }
}

/// Exact ratio unless the denominator is zero, where `ε` keeps it finite.
fn guarded_ratio(num: usize, den: usize, eps: f64) -> f64 {
    if den == 0 {
        ratio(num, 0, eps)
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    pub fn metrics(&self, epsilon: f64, tpr_denominator: TprDenominator) -> MetricsReport {
        let (tp, fp, fn_, tn) = (self.tp, self.fp, self.fn_, self.tn);
        let precision = guarded_ratio(tp, tp + fp, epsilon);
        let recall = guarded_ratio(tp, tp + fn_, epsilon);
        let f1 = if tp == 0 || precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let accuracy = guarded_ratio(tp + tn, tp + tn + fp + fn_, epsilon);
        let tpr = match tpr_denominator {
            TprDenominator::Standard => ratio(tp, tp + fn_, epsilon),
            TprDenominator::Paper => ratio(tp, tp + fp, epsilon),
        };
        let fpr = ratio(fp, fp + tn, epsilon);
        MetricsReport {
            precision,
            recall,
            f1,
            accuracy,
            tpr,
            fpr,
            counts: *self,
        }
    }
}

/// Direct per-sample scan.
pub fn confusion_at(
    dist: &SimilarityDistributions,
    lambda: f64,
) -> Result<ConfusionCounts, EvalError> {
    check(dist)?;
    let tp = dist.auto_samples.iter().filter(|&&s| s >= lambda).count();
    let fp = dist.cross_samples.iter().filter(|&&s| s >= lambda).count();
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_: dist.auto_samples.len() - tp,
        tn: dist.cross_samples.len() - fp,
        lambda,
    })
}

/// Metrics at `lambda` with the standard TPR denominator.
pub fn metrics_at(
    dist: &SimilarityDistributions,
    lambda: f64,
    epsilon: f64,
) -> Result<MetricsReport, EvalError> {
    metrics_at_with(dist, lambda, epsilon, TprDenominator::Standard)
}

pub fn metrics_at_with(
    dist: &SimilarityDistributions,
    lambda: f64,
    epsilon: f64,
    tpr_denominator: TprDenominator,
) -> Result<MetricsReport, EvalError> {
    Ok(confusion_at(dist, lambda)?.metrics(epsilon, tpr_denominator))
}

/// Sorted copies of both sample sets for `O(log n)` counting at many thresholds.
/// Produces exactly the counts of [`confusion_at`].
#[derive(Debug, Clone)]
pub struct SortedScores {
    auto: Vec<f64>,
    cross: Vec<f64>,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn count_ge(sorted: &[f64], lambda: f64) -> usize {
    sorted.len() - sorted.partition_point(|&s| s < lambda)
}

impl SortedScores {
    pub fn new(dist: &SimilarityDistributions) -> Result<Self, EvalError> {
        check(dist)?;
        Ok(Self {
            auto: sorted(&dist.auto_samples),
            cross: sorted(&dist.cross_samples),
        })
    }

    pub fn confusion(&self, lambda: f64) -> ConfusionCounts {
        let tp = count_ge(&self.auto, lambda);
        let fp = count_ge(&self.cross, lambda);
        ConfusionCounts {
            tp,
            fp,
            fn_: self.auto.len() - tp,
            tn: self.cross.len() - fp,
            lambda,
        }
    }

    pub fn auto(&self) -> &[f64] {
        &self.auto
    }

    pub fn cross(&self) -> &[f64] {
        &self.cross
    }

    /// Distinct sample values of both sets, ascending.
    pub fn distinct_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.auto.iter().chain(&self.cross).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn min(&self) -> f64 {
        self.auto[0].min(self.cross[0])
    }

    pub fn max(&self) -> f64 {
        self.auto[self.auto.len() - 1].max(self.cross[self.cross.len() - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub lambda: f64,
}

/// ROC points ordered by descending threshold, anchored at `(0, 0)` with
/// `lambda = +inf` and `(1, 1)` with `lambda = -inf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

const ROC_MARGIN: f64 = 1e-6;

pub fn roc_sweep(
    dist: &SimilarityDistributions,
    num_points: usize,
    epsilon: f64,
) -> Result<RocCurve, EvalError> {
    roc_sweep_with(dist, num_points, epsilon, TprDenominator::Standard)
}

/// Sweeps `num_points` evenly spaced thresholds over the observed sample
/// range (padded by `1e-6`) and integrates the curve by the trapezoid rule.
pub fn roc_sweep_with(
    dist: &SimilarityDistributions,
    num_points: usize,
    epsilon: f64,
    tpr_denominator: TprDenominator,
) -> Result<RocCurve, EvalError> {
    if num_points < 2 {
        return Err(EvalError::TooFewPoints(num_points));
    }
    let scores = SortedScores::new(dist)?;
    let hi = scores.max() + ROC_MARGIN;
    let lo = scores.min() - ROC_MARGIN;
    let step = (hi - lo) / (num_points - 1) as f64;

    let mut points = Vec::with_capacity(num_points + 2);
    points.push(RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        lambda: f64::INFINITY,
    });
    for i in 0..num_points {
        let lambda = if i == num_points - 1 {
            lo
        } else {
            hi - step * i as f64
        };
        let m = scores.confusion(lambda).metrics(epsilon, tpr_denominator);
        points.push(RocPoint {
            fpr: m.fpr,
            tpr: m.tpr,
            lambda,
        });
    }
    points.push(RocPoint {
        fpr: 1.0,
        tpr: 1.0,
        lambda: f64::NEG_INFINITY,
    });

    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

/// Trapezoid area under a curve whose points are ordered along the curve.
///
/// Points are sorted by `(fpr, tpr)` first, which for a monotone ROC is the
/// traversal order; vertical runs at one `fpr` then contribute no area.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(auto: &[f64], cross: &[f64]) -> SimilarityDistributions {
        SimilarityDistributions::new(auto.to_vec(), cross.to_vec())
    }

    fn counts(c: &ConfusionCounts) -> (usize, usize, usize, usize) {
        (c.tp, c.fn_, c.fp, c.tn)
    }

    #[test]
    fn confusion_examples() {
        let d = dist(&[0.9], &[0.1]);
        assert_eq!(counts(&confusion_at(&d, 0.5).unwrap()), (1, 0, 0, 1));

        let d = dist(&[0.2, 0.6, 0.8], &[0.1, 0.3, 0.7]);
        assert_eq!(counts(&confusion_at(&d, -1.0).unwrap()), (3, 0, 3, 0));
        assert_eq!(counts(&confusion_at(&d, 0.5).unwrap()), (2, 1, 1, 2));
    }

    #[test]
    fn sample_on_threshold_is_positive() {
        let d = dist(&[0.5], &[0.5]);
        assert_eq!(counts(&confusion_at(&d, 0.5).unwrap()), (1, 0, 1, 0));
    }

    #[test]
    fn empty_sets_rejected() {
        assert_eq!(
            confusion_at(&dist(&[], &[0.1]), 0.5),
            Err(EvalError::NoAutoSamples)
        );
        assert_eq!(
            confusion_at(&dist(&[0.1], &[]), 0.5),
            Err(EvalError::NoCrossSamples)
        );
        assert!(roc_sweep(&dist(&[0.9], &[0.1]), 1, 1e-9).is_err());
    }

    #[test]
    fn metrics_examples() {
        let m = metrics_at(&dist(&[0.9], &[0.1]), 0.5, 1e-9).unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.accuracy),
            (1.0, 1.0, 1.0, 1.0)
        );

        let m = metrics_at(&dist(&[0.9], &[0.1]), 0.95, 1e-9).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));

        let m = metrics_at(&dist(&[0.2, 0.6, 0.8], &[0.1, 0.3, 0.7]), 0.5, 1e-9).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.tpr - 2.0 / 3.0).abs() < 1e-9);
        assert!((m.fpr - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn precision_style_tpr_denominator() {
        // At 0.65: tp = 2 (0.8, 0.9), fn = 2, fp = 1 (0.7).
        let d = dist(&[0.2, 0.6, 0.8, 0.9], &[0.1, 0.3, 0.7]);
        let s = metrics_at_with(&d, 0.65, 0.0, TprDenominator::Standard).unwrap();
        let p = metrics_at_with(&d, 0.65, 0.0, TprDenominator::Paper).unwrap();
        assert_eq!(s.tpr, 0.5);
        assert_eq!(p.tpr, 2.0 / 3.0);
        assert_eq!(p.precision, p.tpr);
        assert_eq!(s.fpr, p.fpr);
    }

    #[test]
    fn roc_perfect_separation() {
        // Two grid points sit outside the sample range and cannot split the classes.
        let r = roc_sweep(&dist(&[0.9, 0.8], &[0.1, 0.2]), 2, 1e-9).unwrap();
        assert_eq!(r.points.len(), 4);
        assert!((r.auc - 0.5).abs() < 1e-8);
        let r = roc_sweep(&dist(&[0.9, 0.8], &[0.1, 0.2]), 3, 1e-9).unwrap();
        assert!((r.auc - 1.0).abs() < 1e-8);
        let r = roc_sweep(&dist(&[0.9, 0.8], &[0.1, 0.2]), 57, 1e-9).unwrap();
        assert!((r.auc - 1.0).abs() < 1e-8);
    }

    #[test]
    fn roc_identical_sets_is_chance() {
        let xs = [0.1, 0.35, 0.4, 0.62, 0.9];
        let r = roc_sweep(&dist(&xs, &xs), 1001, 1e-9).unwrap();
        assert!((r.auc - 0.5).abs() <= 0.02);
    }

    #[test]
    fn roc_structure() {
        let r = roc_sweep(&dist(&[0.2, 0.6, 0.8], &[0.1, 0.3, 0.7]), 11, 1e-9).unwrap();
        assert_eq!(r.points.len(), 13);
        assert_eq!((r.points[0].fpr, r.points[0].tpr), (0.0, 0.0));
        let last = r.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in r.points.windows(2) {
            assert!(w[0].lambda > w[1].lambda);
            assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
    }

    /// P(auto > cross) + ½ P(auto = cross) over all pairs.
    fn mann_whitney(auto: &[f64], cross: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in auto {
            for c in cross {
                s += if a > c {
                    1.0
                } else if a == c {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (auto.len() * cross.len()) as f64
    }

    #[test]
    fn roc_matches_pairwise_oracle() {
        let auto = [0.2, 0.6, 0.8];
        let cross = [0.1, 0.3, 0.7];
        // 1 + 2 + 3 winning pairs out of 9.
        assert_eq!(mann_whitney(&auto, &cross), 6.0 / 9.0);
        let r = roc_sweep(&dist(&auto, &cross), 1001, 1e-9).unwrap();
        assert!((r.auc - 6.0 / 9.0).abs() <= 0.01, "{}", r.auc);
    }

    #[test]
    fn vertical_steps_add_no_area() {
        // auto 0.9 beats cross 0.5, auto 0.3 loses: AUC = 1/2.
        let r = roc_sweep(&dist(&[0.9, 0.3], &[0.5]), 1001, 1e-9).unwrap();
        assert!((r.auc - 0.5).abs() < 1e-6);
    }

    fn samples() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-100i32..=100).prop_map(|k| k as f64 / 100.0), 1..40)
    }

    proptest! {
        #[test]
        fn partition_monotonicity_and_sorted_agreement(auto in samples(), cross in samples()) {
            let d = dist(&auto, &cross);
            let fast = SortedScores::new(&d).unwrap();
            let mut prev: Option<ConfusionCounts> = None;
            for i in 0..=60 {
                let lambda = -1.1 + 2.2 * i as f64 / 60.0;
                let c = confusion_at(&d, lambda).unwrap();
                prop_assert_eq!(c.tp + c.fn_, auto.len());
                prop_assert_eq!(c.fp + c.tn, cross.len());
                prop_assert_eq!(c, fast.confusion(lambda));
                if let Some(p) = prev {
                    prop_assert!(c.tp <= p.tp && c.fp <= p.fp);
                    prop_assert!(c.tn >= p.tn && c.fn_ >= p.fn_);
                }
                prev = Some(c);
            }
        }

        #[test]
        fn f1_identity_and_epsilon_insensitivity(auto in samples(), cross in samples(), lambda in -1.0f64..1.0) {
            let d = dist(&auto, &cross);
            let m = metrics_at(&d, lambda, 1e-9).unwrap();
            let c = m.counts;
            if c.tp > 0 {
                let alt = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64;
                prop_assert!((m.f1 - alt).abs() <= 1e-12);
                let z = metrics_at(&d, lambda, 0.0).unwrap();
                for (a, b) in [(m.precision, z.precision), (m.recall, z.recall), (m.f1, z.f1),
                               (m.accuracy, z.accuracy), (m.tpr, z.tpr), (m.fpr, z.fpr)] {
                    prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-300));
                }
            } else {
                prop_assert_eq!(m.f1, 0.0);
            }
            for v in [m.precision, m.recall, m.f1, m.accuracy, m.tpr, m.fpr] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn auc_tracks_pairwise_oracle(auto in samples(), cross in samples()) {
            let r = roc_sweep(&dist(&auto, &cross), 1001, 1e-9).unwrap();
            prop_assert!((r.auc - mann_whitney(&auto, &cross)).abs() <= 0.01);
        }
    }
}
