use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dense::Dense;
use crate::error::{Error, Result};

pub fn argmax_rows(x: &Dense) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of masked nodes whose prediction equals the label.
pub fn accuracy(preds: &[usize], labels: &[usize], mask: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ((&p, &y), &m) in preds.iter().zip(labels).zip(mask) {
        if m {
            total += 1;
            hits += (p == y) as usize;
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(hits as f64 / total as f64)
}

/// Rank-statistic AUC with midranks for ties. `None` when only one class
/// is present.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share the midrank
        let midrank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            if positive[idx] {
                rank_sum_pos += midrank;
            }
        }
        start = end;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AucSummary {
    /// Mean over scorable columns; NaN when none is scorable.
    pub mean: f64,
    pub scored_columns: usize,
    pub skipped_columns: usize,
}

/// Mean AUC over label columns. `scores[item][col]`, `labels[item][col]`
/// in {0, 1}, `valid[item][col]` marks present labels.
pub fn roc_auc(scores: &[Vec<f64>], labels: &[Vec<f64>], valid: &[Vec<bool>]) -> AucSummary {
    let cols = scores.first().map_or(0, |r| r.len());
    let mut total = 0.0;
    let mut scored = 0;
    let mut skipped = 0;
    for c in 0..cols {
        let mut s = Vec::new();
        let mut y = Vec::new();
        for i in 0..scores.len() {
            if valid[i][c] {
                s.push(scores[i][c]);
                y.push(labels[i][c] > 0.5);
            }
        }
        match binary_auc(&s, &y) {
            Some(a) => {
                total += a;
                scored += 1;
            }
            None => skipped += 1,
        }
    }
    AucSummary {
        mean: if scored > 0 { total / scored as f64 } else { f64::NAN },
        scored_columns: scored,
        skipped_columns: skipped,
    }
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> f64 {
    if preds.is_empty() {
        return f64::NAN;
    }
    let mse = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64;
    libm::sqrt(mse)
}
