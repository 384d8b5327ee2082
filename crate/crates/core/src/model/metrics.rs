use serde::{Deserialize, Serialize};

use crate::diff::BCE_CLAMP;
use crate::error::{Error, Result};

/// Mean binary cross entropy with predictions clamped to
/// `[1e-7, 1 - 1e-7]`. Used as LogLoss at evaluation time.
pub fn bce_loss(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Contract("bce over an empty batch".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::dim("bce_loss", (preds.len(), 1), (labels.len(), 1)));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(-total / preds.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic. Tied scores get
/// their average rank, so each tied positive/negative pair counts 0.5.
///
/// Ranks are handled as doubled integers, which makes the result exactly
/// `pairs_won / (n_pos * n_neg)` with no rounding before the final divide.
pub fn auc(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::dim("auc", (preds.len(), 1), (labels.len(), 1)));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "auc needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    if let Some(p) = preds.iter().find(|p| p.is_nan()) {
        return Err(Error::NonFinite(format!("prediction {p}")));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));

    // Sum over positives of 2 * (1-based average rank).
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && preds[order[j + 1]] == preds[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 average to (i + j + 2) / 2.
        let rank2 = (i + j + 2) as u64;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        pos_rank_sum2 += rank2 * positives;
        i = j + 1;
    }
    let u2 = pos_rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Evaluation summary; also the JSON shape printed by `eval`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: f64,
    pub logloss: f64,
}
