//! Brute-force metric references shared by the integration targets.
//! Row-major `rows × cols` scores and labels throughout.

#![allow(dead_code)]

use std::collections::HashSet;

pub fn column<T: Copy>(v: &[T], cols: usize, c: usize) -> Vec<T> {
    v.iter().skip(c).step_by(cols).copied().collect()
}

/// Mean of (TPR + TNR) / 2 over attributes with both classes present.
pub fn mean_accuracy(
    scores: &[f64],
    labels: &[bool],
    rows: usize,
    cols: usize,
    thr: f64,
) -> Option<f64> {
    let mut per = Vec::new();
    for a in 0..cols {
        let s = column(scores, cols, a);
        let y = column(labels, cols, a);
        let pos: Vec<usize> = (0..rows).filter(|&i| y[i]).collect();
        let neg: Vec<usize> = (0..rows).filter(|&i| !y[i]).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let tpr = pos.iter().filter(|&&i| s[i] >= thr).count() as f64 / pos.len() as f64;
        let tnr = neg.iter().filter(|&&i| s[i] < thr).count() as f64 / neg.len() as f64;
        per.push(0.5 * (tpr + tnr));
    }
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

/// AP for distinct scores: for each positive, the fraction of positives
/// among everything scored at least as high.
pub fn average_precision(s: &[f64], y: &[bool]) -> Option<f64> {
    let pos: Vec<usize> = (0..s.len()).filter(|&i| y[i]).collect();
    if pos.is_empty() {
        return None;
    }
    let total: f64 = pos
        .iter()
        .map(|&i| {
            let above = s.iter().filter(|&&t| t >= s[i]).count();
            let pos_above = pos.iter().filter(|&&j| s[j] >= s[i]).count();
            pos_above as f64 / above as f64
        })
        .sum();
    Some(total / pos.len() as f64)
}

pub fn mean_average_precision(scores: &[f64], labels: &[bool], cols: usize) -> Option<f64> {
    let per: Vec<f64> = (0..cols)
        .filter_map(|c| average_precision(&column(scores, cols, c), &column(labels, cols, c)))
        .collect();
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

/// (accuracy, precision, recall, f1) from per-example label sets. An
/// example with empty truth and empty prediction counts as perfect; F1 is
/// the harmonic mean of the averaged precision and recall.
pub fn example_based(
    scores: &[f64],
    labels: &[bool],
    rows: usize,
    cols: usize,
    thr: f64,
) -> [f64; 4] {
    let (mut acc, mut prec, mut rec) = (0.0, 0.0, 0.0);
    for i in 0..rows {
        let truth: HashSet<usize> = (0..cols).filter(|&a| labels[i * cols + a]).collect();
        let guess: HashSet<usize> = (0..cols).filter(|&a| scores[i * cols + a] >= thr).collect();
        let inter = truth.intersection(&guess).count() as f64;
        let union = truth.union(&guess).count() as f64;
        if union == 0.0 {
            acc += 1.0;
            prec += 1.0;
            rec += 1.0;
            continue;
        }
        acc += inter / union;
        if !guess.is_empty() {
            prec += inter / guess.len() as f64;
        }
        if !truth.is_empty() {
            rec += inter / truth.len() as f64;
        }
    }
    let n = rows as f64;
    let (acc, prec, rec) = (acc / n, prec / n, rec / n);
    let f1 = if prec + rec > 0.0 {
        2.0 * prec * rec / (prec + rec)
    } else {
        0.0
    };
    [acc, prec, rec, f1]
}
