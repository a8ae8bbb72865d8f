use super::Matrix;
use crate::error::{Error, Result};

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let cols = logits.cols();
    if cols == 0 {
        return out;
    }
    for row in out.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy over a batch of logits and its gradient w.r.t. the logits.
///
/// Per row: `loss = -log softmax(z)[y]`, `grad = softmax(z) - one_hot(y)`.
/// The batch loss is the mean over rows, so the returned gradient is divided
/// by the row count. A `1 x L` input is the single-sample case.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (rows, classes) = logits.shape();
    if labels.len() != rows {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if rows == 0 {
        return Err(Error::Empty("cross_entropy batch".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    logits.ensure_finite("cross_entropy logits")?;

    let mut grad = Matrix::zeros(rows, classes);
    let inv = 1.0 / rows as f64;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        total += log_sum - (row[label] - max);
        let g = &mut grad.as_mut_slice()[r * classes..(r + 1) * classes];
        for (j, (gj, &z)) in g.iter_mut().zip(row).enumerate() {
            let p = (z - max).exp() / sum;
            *gj = (p - if j == label { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((total * inv, grad))
}

/// In-place SGD update `params -= lr * grads`.
///
/// `lr` may be zero (a no-op step); negative or non-finite rates are rejected.
pub fn sgd_step(params: &mut Matrix, grads: &Matrix, lr: f64) -> Result<()> {
    if params.shape() != grads.shape() {
        return Err(Error::ShapeMismatch {
            op: "sgd_step",
            left: params.shape(),
            right: grads.shape(),
        });
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::config(format!(
            "learning rate {lr} must be finite and >= 0"
        )));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (p, g) in params.as_mut_slice().iter_mut().zip(grads.as_slice()) {
        *p -= lr * g;
    }
    params.ensure_finite("sgd_step")
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_diff_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::config(format!(
            "finite-difference step {h} must be > 0"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                context: format!("finite difference at coordinate {i}"),
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Largest [`relative_error`] across paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
