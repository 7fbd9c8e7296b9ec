//! Classification metrics: accuracy, per-class precision/recall/F1,
//! confusion matrix, and one-vs-rest ROC/AUC.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<usize>>,
    pub ovr_auc: Vec<f64>,
    pub roc_points: Vec<Vec<RocPoint>>,
}

/// Predictions by argmax; 0/0 ratios are defined as 0; OvR AUC per class via
/// the rank statistic with rank-averaged ties.
pub fn compute_metrics(truth: &[usize], probabilities: &[Vec<f64>]) -> Result<MetricsBundle> {
    if truth.len() != probabilities.len() {
        return Err(Error::DimMismatch(format!(
            "{} labels vs {} probability rows",
            truth.len(),
            probabilities.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("labels".into()));
    }
    let n_c = probabilities[0].len();
    for (i, row) in probabilities.iter().enumerate() {
        if row.len() != n_c {
            return Err(Error::DimMismatch(format!("probability row {i} has width {}", row.len())));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
            return Err(Error::InvalidArgument(format!("row {i} is not a probability vector")));
        }
    }
    for &y in truth {
        if y >= n_c {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
    }

    let predictions: Vec<usize> = probabilities
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        })
        .collect();

    let mut confusion = vec![vec![0usize; n_c]; n_c];
    for (&y, &p) in truth.iter().zip(&predictions) {
        confusion[y][p] += 1;
    }
    let total = truth.len();
    let correct: usize = (0..n_c).map(|i| confusion[i][i]).sum();
    let accuracy = correct as f64 / total as f64;

    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    let per_class: Vec<ClassMetrics> = (0..n_c)
        .map(|k| {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = (0..n_c).map(|i| confusion[i][k]).sum();
            let recall = ratio(tp, support);
            let precision = ratio(tp, predicted);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                recall,
                precision,
                f1,
                support,
            }
        })
        .collect();

    let mut ovr_auc = Vec::with_capacity(n_c);
    let mut roc_points = Vec::with_capacity(n_c);
    for k in 0..n_c {
        let scores: Vec<f64> = probabilities.iter().map(|row| row[k]).collect();
        let positives: Vec<bool> = truth.iter().map(|&y| y == k).collect();
        ovr_auc.push(rank_auc(&scores, &positives));
        roc_points.push(roc_curve(&scores, &positives));
    }

    Ok(MetricsBundle {
        accuracy,
        per_class,
        confusion,
        ovr_auc,
        roc_points,
    })
}

/// Mann-Whitney AUC with rank-averaged ties; 0 when a class is absent from
/// either side.
pub fn rank_auc(scores: &[f64], positives: &[bool]) -> f64 {
    let n_pos = positives.iter().filter(|&&b| b).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // rank-average tie blocks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &idx in &order[i..j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    (rank_sum_pos - n_pos as f64 * (n_pos as f64 + 1.0) / 2.0) / (n_pos as f64 * n_neg as f64)
}

/// ROC points at all distinct score thresholds (descending) plus a sentinel
/// above the maximum; starts at (0,0) and ends at (1,1).
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Vec<RocPoint> {
    let n_pos = positives.iter().filter(|&&b| b).count();
    let n_neg = positives.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: if n_neg > 0 { fp as f64 / n_neg as f64 } else { 0.0 },
            tpr: if n_pos > 0 { tp as f64 / n_pos as f64 } else { 0.0 },
            threshold,
        });
    }
    points
}

/// Trapezoidal area under a ROC curve.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

pub fn write_metrics_json(bundle: &MetricsBundle, path: &Path) -> Result<()> {
    crate::volume::write_json(path, bundle)
}

/// ROC CSV with columns class, fpr, tpr, threshold.
pub fn write_roc_csv(bundle: &MetricsBundle, path: &Path) -> Result<()> {
    let mut out = String::from("class,fpr,tpr,threshold\n");
    for (k, points) in bundle.roc_points.iter().enumerate() {
        for p in points {
            out.push_str(&format!("{k},{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
    }
    crate::volume::write_bytes(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn one_hot(k: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        v
    }

    #[test]
    fn perfect_predictions() {
        let truth = vec![0, 1, 2, 0, 1, 2];
        let probs: Vec<Vec<f64>> = truth.iter().map(|&y| one_hot(y, 3)).collect();
        let m = compute_metrics(&truth, &probs).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for c in &m.per_class {
            assert_eq!(c.f1, 1.0);
        }
        for &auc in &m.ovr_auc {
            assert_eq!(auc, 1.0);
        }
    }

    #[test]
    fn hand_counted_precision_recall() {
        // class 0: TP=3, FP=1, FN=1
        let truth = vec![0, 0, 0, 0, 1, 1];
        let probs = vec![
            one_hot(0, 2),
            one_hot(0, 2),
            one_hot(0, 2),
            one_hot(1, 2), // FN for class 0
            one_hot(0, 2), // FP for class 0
            one_hot(1, 2),
        ];
        let m = compute_metrics(&truth, &probs).unwrap();
        assert_eq!(m.per_class[0].precision, 0.75);
        assert_eq!(m.per_class[0].recall, 0.75);
        assert_eq!(m.per_class[0].f1, 0.75);
    }

    #[test]
    fn absent_class_reports_zero_with_support_flag() {
        let truth = vec![0, 0, 1];
        let probs = vec![one_hot(0, 3), one_hot(0, 3), one_hot(1, 3)];
        let m = compute_metrics(&truth, &probs).unwrap();
        assert_eq!(m.per_class[2].support, 0);
        assert_eq!(m.per_class[2].recall, 0.0);
        assert_eq!(m.per_class[2].f1, 0.0);
        assert_eq!(m.ovr_auc[2], 0.0);
    }

    #[test]
    fn confusion_consistency_identities() {
        let mut rng = SplitMix64::new(5);
        let n = 60;
        let n_c = 3;
        let truth: Vec<usize> = (0..n).map(|_| rng.next_bounded(n_c as u64) as usize).collect();
        let probs: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..n_c).map(|_| rng.next_f64() + 1e-6).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let m = compute_metrics(&truth, &probs).unwrap();
        // row sums = support
        for (k, row) in m.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), m.per_class[k].support);
        }
        // accuracy = support-weighted mean recall
        let weighted: f64 = m
            .per_class
            .iter()
            .map(|c| c.recall * c.support as f64)
            .sum::<f64>()
            / n as f64;
        assert!((m.accuracy - weighted).abs() < 1e-12);
    }

    #[test]
    fn rank_auc_equals_trapezoid() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..20 {
            let n = 40;
            let positives: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
            if positives.iter().all(|&b| b) || !positives.iter().any(|&b| b) {
                continue;
            }
            // quantized scores force ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.next_f64() * 8.0).floor() / 8.0).collect();
            let auc = rank_auc(&scores, &positives);
            let trap = trapezoid_auc(&roc_curve(&scores, &positives));
            assert!((auc - trap).abs() < 1e-9, "{auc} vs {trap}");
        }
    }

    #[test]
    fn shuffle_invariance() {
        let mut rng = SplitMix64::new(9);
        let truth: Vec<usize> = (0..30).map(|_| rng.next_bounded(3) as usize).collect();
        let probs: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.next_f64() + 0.01).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let m1 = compute_metrics(&truth, &probs).unwrap();
        let mut perm: Vec<usize> = (0..30).collect();
        rng.shuffle(&mut perm);
        let truth2: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        let probs2: Vec<Vec<f64>> = perm.iter().map(|&i| probs[i].clone()).collect();
        let m2 = compute_metrics(&truth2, &probs2).unwrap();
        assert_eq!(m1.accuracy, m2.accuracy);
        for (a, b) in m1.ovr_auc.iter().zip(&m2.ovr_auc) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_rows() {
        assert!(compute_metrics(&[0], &[vec![0.9, 0.3]]).is_err());
        assert!(compute_metrics(&[0, 1], &[vec![1.0, 0.0]]).is_err());
    }
}
