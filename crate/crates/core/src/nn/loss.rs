//! Softmax cross-entropy.
//!
//! Both entry points return the gradient w.r.t. the output-layer logits,
//! `(p - onehot) / batch`, which is what [`super::Network::backward`] expects
//! for a softmax output layer.

use ndarray::Axis;

use crate::{Error, Result, Tensor2};

fn check_labels(rows: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Input(format!(
            "{} labels for {rows} output rows",
            labels.len()
        )));
    }
    if rows == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Input(format!(
            "label {label} at row {row} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean `-ln p(label)` over rows of a probability matrix.
pub fn cross_entropy_loss(probs: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    check_labels(probs.nrows(), probs.ncols(), labels)?;
    let n = probs.nrows() as f64;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss -= probs[[i, label]].max(f64::MIN_POSITIVE).ln();
        grad[[i, label]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n);
    Ok((loss / n, grad))
}

/// Same loss computed from logits with log-sum-exp.
pub fn cross_entropy_from_logits(logits: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    check_labels(logits.nrows(), logits.ncols(), labels)?;
    let n = logits.nrows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in grad.axis_iter_mut(Axis(0)).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_sum = row.fold(0.0, |s, &v| s + (v - max).exp()).ln() + max;
        loss += log_sum - row[label];
        row.mapv_inplace(|v| (v - log_sum).exp());
        row[label] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n);
    Ok((loss / n, grad))
}

/// Row-wise argmax.
pub fn predicted_classes(outputs: &Tensor2) -> Vec<usize> {
    outputs
        .axis_iter(Axis(0))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
