//! Losses over minibatches. Each returns the scalar loss together with its
//! gradient w.r.t. the first argument.

use ndarray::{Array1, Array2, Axis};

use crate::codes::BinaryCode;
use crate::error::{Error, Result};

use super::Tensor2;

fn same_shape(a: &Tensor2, b: &Tensor2, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean over all elements of `(pred - target)^2`.
pub fn mse_loss(pred: &Tensor2, target: &Tensor2) -> Result<(f64, Tensor2)> {
    same_shape(pred, target, "mse")?;
    let count = pred.len().max(1) as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff * (2.0 / count)))
}

/// `||z - c||^2` for a single latent.
pub fn latent_reg_loss(z: &[f64], code: &BinaryCode) -> Result<(f64, Vec<f64>)> {
    if z.len() != code.len() {
        return Err(Error::ShapeMismatch(format!(
            "latent length {} vs code length {}",
            z.len(),
            code.len()
        )));
    }
    let grad: Vec<f64> = z
        .iter()
        .zip(code.values())
        .map(|(&zi, &ci)| 2.0 * (zi - ci as f64))
        .collect();
    Ok((code.distance_sq(z), grad))
}

/// Row-mean of `||z_r - c_r||^2` with its gradient.
pub fn latent_reg_batch(z: &Tensor2, codes: &Tensor2) -> Result<(f64, Tensor2)> {
    same_shape(z, codes, "latent regularization")?;
    let rows = z.nrows().max(1) as f64;
    let diff = z - codes;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / rows;
    Ok((loss, diff * (2.0 / rows)))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|l| (l - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Row-wise `log softmax`, computed stably.
fn log_softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|l| l - lse);
    }
    out
}

/// Shannon entropy (nats) of each row.
pub fn entropy(probs: &Tensor2) -> Array1<f64> {
    probs.map_axis(Axis(1), |row| {
        -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    })
}

/// Mean `-log softmax(logits)[label]` over rows.
pub fn softmax_ce_loss(logits: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    if logits.nrows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let classes = logits.ncols();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let rows = labels.len().max(1) as f64;
    let log_probs = log_softmax_rows(logits);
    let loss = -labels
        .iter()
        .enumerate()
        .map(|(r, &l)| log_probs[[r, l]])
        .sum::<f64>()
        / rows;
    let mut grad = log_probs.mapv(f64::exp);
    for (r, &l) in labels.iter().enumerate() {
        grad[[r, l]] -= 1.0;
    }
    grad /= rows;
    Ok((loss, grad))
}

/// Mean cross-entropy `H(teacher, softmax(student))` over rows.
pub fn distill_loss(student_logits: &Tensor2, teacher: &Tensor2) -> Result<(f64, Tensor2)> {
    same_shape(student_logits, teacher, "distillation")?;
    for (r, row) in teacher.axis_iter(Axis(0)).enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("row {r} sums to {sum}")));
        }
    }
    let rows = teacher.nrows().max(1) as f64;
    let log_probs = log_softmax_rows(student_logits);
    let loss = -(teacher * &log_probs).sum() / rows;
    let grad: Array2<f64> = (log_probs.mapv(f64::exp) - teacher) / rows;
    Ok((loss, grad))
}
