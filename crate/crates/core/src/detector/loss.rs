//! Auxiliary-head losses with closed-form gradients.
//!
//! All functions return `(value, gradient)` pairs so the training loop and
//! the finite-difference checks share one implementation.

use super::OffsetTarget;
use crate::error::{Error, Result};

/// Squared Euclidean distance between a predicted unit direction and the
/// target direction. Range `[0, 4]` for unit inputs.
pub fn loss_orientation(v: [f64; 2], target: &OffsetTarget) -> Result<f64> {
    if !target.valid {
        return Err(Error::InvalidArgument(
            "orientation loss on an invalid offset target (mask it out)".into(),
        ));
    }
    Ok(orientation_with_grad(v, target.dir).0)
}

/// `||v - t||^2` and its gradient with respect to `v`.
pub fn orientation_with_grad(v: [f64; 2], t: [f64; 2]) -> (f64, [f64; 2]) {
    let d = [v[0] - t[0], v[1] - t[1]];
    (d[0] * d[0] + d[1] * d[1], [2.0 * d[0], 2.0 * d[1]])
}

const NORM_EPS: f64 = 1e-12;

/// Unit-normalizes a raw head output; zero vectors map to `(1, 0)`.
pub fn normalize_dir(u: [f64; 2]) -> [f64; 2] {
    let n = u[0].hypot(u[1]);
    if n < NORM_EPS {
        [1.0, 0.0]
    } else {
        [u[0] / n, u[1] / n]
    }
}

/// Orientation loss on the raw (unnormalized) head output `u`, with the
/// gradient pushed back through `v = u / |u|`.
pub fn orientation_raw_with_grad(u: [f64; 2], t: [f64; 2]) -> (f64, [f64; 2]) {
    let n = u[0].hypot(u[1]).max(NORM_EPS);
    let v = [u[0] / n, u[1] / n];
    let (loss, dv) = orientation_with_grad(v, t);
    // dv/du = (I - v v^T) / |u|
    let dot = dv[0] * v[0] + dv[1] * v[1];
    (loss, [(dv[0] - dot * v[0]) / n, (dv[1] - dot * v[1]) / n])
}

pub fn loss_magnitude(m: f64, m_gt: f64) -> f64 {
    magnitude_with_grad(m, m_gt).0
}

pub fn magnitude_with_grad(m: f64, m_gt: f64) -> (f64, f64) {
    let d = m - m_gt;
    (d * d, 2.0 * d)
}

/// `-log softmax(logits)[label]`.
pub fn loss_classification(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(cross_entropy_with_grad(logits, label).0)
}

/// Cross-entropy and its gradient `softmax(logits) - onehot(label)`.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let loss = log_z - logits[label];
    let grad = logits
        .iter()
        .enumerate()
        .map(|(i, l)| (l - log_z).exp() - if i == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

/// Binary cross-entropy on a logit, target in `{0, 1}`.
pub fn bce_with_logit(z: f64, target: f64) -> (f64, f64) {
    // log(1 + exp(-|z|)) + max(z, 0) - z * t
    let loss = (1.0 + (-z.abs()).exp()).ln() + z.max(0.0) - z * target;
    let p = 1.0 / (1.0 + (-z).exp());
    (loss, p - target)
}

/// Smooth-L1 with transition at `beta`.
pub fn smooth_l1(x: f64, beta: f64) -> (f64, f64) {
    let a = x.abs();
    if a < beta {
        (0.5 * x * x / beta, x / beta)
    } else {
        (a - 0.5 * beta, x.signum())
    }
}
