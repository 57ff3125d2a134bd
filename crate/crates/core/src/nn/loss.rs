//! Loss functions. Each returns the scalar loss (mean over the batch) and
//! the gradient w.r.t. the network output, already scaled for the mean.

use ndarray::Ix2;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CategoricalCrossEntropy,
    Mse,
    Mae,
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Loss::CategoricalCrossEntropy => "categorical_cross_entropy",
            Loss::Mse => "mse",
            Loss::Mae => "mae",
        };
        f.write_str(s)
    }
}

/// Cross-entropy against integer class targets, on softmax probabilities.
/// Probabilities are clamped at 1e-12 to keep the loss finite.
pub fn cross_entropy<F: Scalar>(probs: &Tensor<F>, targets: &[usize]) -> (F, Tensor<F>) {
    let p = probs.view().into_dimensionality::<Ix2>().expect("(n, k) probabilities");
    let n = p.shape()[0];
    assert_eq!(n, targets.len(), "target count mismatch");
    let floor = F::fd(1e-12);
    let inv_n = F::one() / F::fd(n as f64);
    let mut loss = F::zero();
    let mut grad = ndarray::Array2::<F>::zeros(p.raw_dim());
    for (i, &t) in targets.iter().enumerate() {
        let pt = p[[i, t]].max(floor);
        loss = loss - pt.ln();
        grad[[i, t]] = -inv_n / pt;
    }
    (loss * inv_n, grad.into_dyn())
}

/// Mean squared error over every element.
pub fn mse<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> (F, Tensor<F>) {
    assert_eq!(pred.shape(), target.shape());
    let inv = F::one() / F::fd(pred.len() as f64);
    let diff = pred - target;
    let loss = diff.iter().map(|d| *d * *d).sum::<F>() * inv;
    let grad = diff.mapv(|d| F::fd(2.0) * d * inv);
    (loss, grad)
}

/// Mean absolute error over every element.
pub fn mae<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> (F, Tensor<F>) {
    assert_eq!(pred.shape(), target.shape());
    let inv = F::one() / F::fd(pred.len() as f64);
    let diff = pred - target;
    let loss = diff.iter().map(|d| d.abs()).sum::<F>() * inv;
    let grad = diff.mapv(|d| d.signum() * inv);
    (loss, grad)
}

/// Fraction of rows whose argmax equals the target, in percent.
pub fn accuracy_pct<F: Scalar>(probs: &Tensor<F>, targets: &[usize]) -> f64 {
    let p = probs.view().into_dimensionality::<Ix2>().expect("(n, k) probabilities");
    let mut hits = 0usize;
    for (row, &t) in p.rows().into_iter().zip(targets) {
        // ties resolve to the first maximal index
        let mut arg = 0;
        let mut best = row[0];
        for (i, &v) in row.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                arg = i;
            }
        }
        if arg == t {
            hits += 1;
        }
    }
    100.0 * hits as f64 / targets.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        let p = arr2(&[[1.0, 0.0], [0.0, 1.0]]).into_dyn();
        let (l, _) = cross_entropy::<f64>(&p, &[0, 1]);
        assert!(l < 1e-9);
    }

    #[test]
    fn cross_entropy_uniform_is_log_k() {
        let p = arr2(&[[0.25; 4]]).into_dyn();
        let (l, _) = cross_entropy::<f64>(&p, &[2]);
        assert!((l - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mse_and_grad() {
        let a = arr2(&[[1.0, 2.0]]).into_dyn();
        let b = arr2(&[[0.0, 0.0]]).into_dyn();
        let (l, g) = mse::<f64>(&a, &b);
        assert!((l - 2.5).abs() < 1e-12);
        assert!((g[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mae_and_grad_sign() {
        let a = arr2(&[[1.0, -2.0]]).into_dyn();
        let b = arr2(&[[0.0, 0.0]]).into_dyn();
        let (l, g) = mae::<f64>(&a, &b);
        assert!((l - 1.5).abs() < 1e-12);
        assert!(g[[0, 0]] > 0.0 && g[[0, 1]] < 0.0);
    }

    #[test]
    fn accuracy_counts_argmax() {
        let p = arr2(&[[0.9, 0.1], [0.4, 0.6], [0.5, 0.5]]).into_dyn();
        // ties resolve to the first maximal index
        assert_eq!(accuracy_pct::<f64>(&p, &[0, 1, 0]), 100.0);
        assert!((accuracy_pct::<f64>(&p, &[1, 1, 1]) - 100.0 / 3.0).abs() < 1e-9);
    }
}
