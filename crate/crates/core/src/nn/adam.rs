//! Adam optimizer with per-parameter moment buffers keyed by parameter name.

use std::collections::HashMap;

use super::layers::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<F: Scalar> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: u64,
    m: HashMap<String, Tensor<F>>,
    v: HashMap<String, Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    /// Moments (0.9, 0.999) and epsilon 1e-7; only the learning rate is a
    /// recipe parameter.
    pub fn new(lr: F) -> Self {
        Self {
            lr,
            beta1: F::fd(0.9),
            beta2: F::fd(0.999),
            eps: F::fd(1e-7),
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Apply one update to a single named parameter given its accumulated
    /// gradient, then clear the gradient. Call once per parameter per step
    /// after bumping [`Adam::begin_step`].
    pub fn update(&mut self, name: &str, value: &mut Tensor<F>, grad: &mut Tensor<F>) {
        let m = self
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(value.raw_dim()));
        let v = self
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(value.raw_dim()));
        let b1 = self.beta1;
        let b2 = self.beta2;
        let t = self.step as i32;
        let correction1 = F::one() - b1.powi(t);
        let correction2 = F::one() - b2.powi(t);
        ndarray::Zip::from(value)
            .and(&mut *grad)
            .and(m)
            .and(v)
            .for_each(|w, g, mi, vi| {
                *mi = b1 * *mi + (F::one() - b1) * *g;
                *vi = b2 * *vi + (F::one() - b2) * *g * *g;
                let mhat = *mi / correction1;
                let vhat = *vi / correction2;
                *w = *w - self.lr * mhat / (vhat.sqrt() + self.eps);
            });
        grad.fill(F::zero());
    }

    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize f(w) = (w - 3)^2
        let mut w = Tensor::from_elem(IxDyn(&[1]), 0.0f64);
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let mut g = w.mapv(|v| 2.0 * (v - 3.0));
            opt.begin_step();
            opt.update("w", &mut w, &mut g);
        }
        assert!((w[[0]] - 3.0).abs() < 1e-3, "got {}", w[[0]]);
    }

    #[test]
    fn first_step_magnitude_close_to_lr() {
        // with bias correction the first Adam step is ~lr in magnitude
        let mut w = Tensor::from_elem(IxDyn(&[1]), 0.0f64);
        let mut opt = Adam::new(0.001);
        let mut g = Tensor::from_elem(IxDyn(&[1]), 10.0f64);
        opt.begin_step();
        opt.update("w", &mut w, &mut g);
        assert!((w[[0]].abs() - 0.001).abs() < 1e-6);
        assert_eq!(g[[0]], 0.0, "gradient cleared after update");
    }
}
