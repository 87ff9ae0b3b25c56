//! Threshold calibration and classification metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LescError, Result};

/// Accuracy within one claim-count bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub accuracy: f64,
    pub count: usize,
}

/// Evaluation artifact: calibrated threshold, accuracy, binary F1 and
/// accuracy bucketed by the number of claims per statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub per_claim_count: BTreeMap<usize, BucketStat>,
}

/// Fraction of statements classified correctly by `score >= threshold`.
pub fn accuracy_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == l)
        .count();
    correct as f64 / scores.len() as f64
}

/// Binary F1. With `positive_is_true` the positive class is the true
/// statement; otherwise the classes are flipped.
pub fn f1_at(scores: &[f64], labels: &[bool], threshold: f64, positive_is_true: bool) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let mut pred = s >= threshold;
        let mut actual = l;
        if !positive_is_true {
            pred = !pred;
            actual = !actual;
        }
        match (pred, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Picks the decision threshold maximizing validation accuracy.
///
/// Candidates are the lowest score (predict everything positive), the
/// midpoints between consecutive distinct sorted scores, and just above the
/// highest score (predict everything negative), so the result is never
/// worse than either trivial classifier. Ties resolve to the lowest
/// candidate.
pub fn calibrate_threshold(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.is_empty() {
        return Err(LescError::EmptySplit);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(LescError::SingleClassValidation);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();

    let mut candidates = vec![sorted[0]];
    for w in sorted.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(sorted[sorted.len() - 1] + 1.0);

    let mut best = candidates[0];
    let mut best_acc = accuracy_at(scores, labels, best);
    for &t in &candidates[1..] {
        let acc = accuracy_at(scores, labels, t);
        if acc > best_acc {
            best_acc = acc;
            best = t;
        }
    }
    Ok(best)
}

/// Full evaluation at a fixed threshold, with per-claim-count buckets.
pub fn evaluate_scores(
    scores: &[f64],
    labels: &[bool],
    claim_counts: &[usize],
    threshold: f64,
    f1_positive_true: bool,
) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(LescError::EmptySplit);
    }
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for ((&s, &l), &n) in scores.iter().zip(labels).zip(claim_counts) {
        let entry = buckets.entry(n).or_insert((0, 0));
        entry.1 += 1;
        if (s >= threshold) == l {
            entry.0 += 1;
        }
    }
    let per_claim_count = buckets
        .into_iter()
        .map(|(n, (ok, total))| {
            (
                n,
                BucketStat {
                    accuracy: ok as f64 / total as f64,
                    count: total,
                },
            )
        })
        .collect();
    Ok(EvalReport {
        threshold,
        accuracy: accuracy_at(scores, labels, threshold),
        f1: f1_at(scores, labels, threshold, f1_positive_true),
        per_claim_count,
    })
}

/// Rank-based ROC AUC (ties get averaged ranks).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    (rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64
}
