//! Ranking metrics for binary risk scores.
//!
//! Tied scores form a single decision threshold: every case in a tie group
//! enters the predicted-positive set together, so results never depend on
//! input order.

use crate::{Error, Result};

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

/// Indices sorted by descending score; ties keep input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// `(true positives, false positives)` after each distinct threshold, highest first.
fn threshold_sweep(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let order = descending(scores);
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((tp, fp));
    }
    out
}

/// Area under the ROC curve via the Mann-Whitney statistic with midranks.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuroc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Average precision: `Σ (R_k − R_{k−1}) · P_k` over distinct thresholds.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(Error::UndefinedAuprc);
    }
    let mut ap = 0.0;
    let mut prev_tp = 0;
    for (tp, fp) in threshold_sweep(scores, labels) {
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (tp - prev_tp) as f64 * precision;
        }
        prev_tp = tp;
    }
    Ok(ap / n_pos as f64)
}

/// Best `min(sensitivity, precision)` over thresholds at the observed scores.
pub fn min_se_pplus(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMinSePplus);
    }
    Ok(threshold_sweep(scores, labels)
        .into_iter()
        .map(|(tp, fp)| {
            let se = tp as f64 / n_pos as f64;
            let pplus = tp as f64 / (tp + fp) as f64;
            se.min(pplus)
        })
        .fold(0.0, f64::max))
}

pub const METRIC_NAMES: [&str; 3] = ["auroc", "auprc", "min_se_pplus"];

/// All three metrics in [`METRIC_NAMES`] order.
pub fn all_metrics(scores: &[f64], labels: &[u8]) -> Result<[f64; 3]> {
    Ok([
        auroc(scores, labels)?,
        auprc(scores, labels)?,
        min_se_pplus(scores, labels)?,
    ])
}
