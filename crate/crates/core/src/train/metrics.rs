use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::net::argmax_rows;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Macro one-vs-rest AUC; `None` when no class has both positives and negatives.
    pub auc: Option<f64>,
    /// Classes left out of the AUC average.
    pub auc_skipped: Vec<usize>,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Rank AUC of `scores` against binary `positive`, ties counted one half.
/// `None` without both classes.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Accuracy, macro-F1, macro AUC, per-class scores and the confusion matrix
/// over the rows selected by `mask`.
pub fn evaluate(probs: &Matrix, labels: &[usize], mask: &[bool]) -> Result<MetricsReport> {
    let c = probs.cols();
    if labels.len() != probs.rows() || mask.len() != probs.rows() {
        return Err(Error::Contract(format!(
            "{} label rows and {} mask rows for {} predictions",
            labels.len(),
            mask.len(),
            probs.rows()
        )));
    }
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::Contract("evaluation mask is empty".into()));
    }
    let sub = probs.select_rows(&rows);
    let pred = argmax_rows(&sub);
    let truth: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();

    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in truth.iter().zip(&pred) {
        confusion[t][p] += 1;
    }
    let correct = (0..c).map(|k| confusion[k][k]).sum::<usize>();
    let accuracy = correct as f64 / rows.len() as f64;

    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = (0..c).map(|t| confusion[t][k]).sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    // classes seen in either the truth or the predictions
    let present: Vec<usize> = (0..c)
        .filter(|&k| per_class[k].support > 0 || (0..c).any(|t| confusion[t][k] > 0))
        .collect();
    let macro_f1 = present.iter().map(|&k| per_class[k].f1).sum::<f64>() / present.len() as f64;

    let mut aucs = Vec::new();
    let mut auc_skipped = Vec::new();
    for k in 0..c {
        let scores: Vec<f64> = (0..sub.rows()).map(|r| sub.get(r, k)).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == k).collect();
        match binary_auc(&scores, &positive) {
            Some(a) => aucs.push(a),
            None => auc_skipped.push(k),
        }
    }
    let auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok(MetricsReport {
        accuracy,
        macro_f1,
        auc,
        auc_skipped,
        per_class,
        confusion,
    })
}
