//! Adam and a reduce-on-plateau learning-rate schedule.

use std::ops::Range;

/// Adam with bias correction (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: usize) -> Self {
        Self {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update. Parameters inside `head` use `head_lr` instead of `lr`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, head: Option<(Range<usize>, f64)>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (head_range, head_lr) = head.unwrap_or((0..0, lr));
        for (k, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let rate = if head_range.contains(&k) { head_lr } else { lr };
            *p -= rate * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved (relative threshold 1e-4) for more than `patience` epochs.
#[derive(Clone, Debug)]
pub struct Plateau {
    patience: usize,
    factor: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Self {
            patience,
            factor,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records an epoch loss and returns the (possibly reduced) rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best * (1.0 - 1e-4) {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            return lr * self.factor;
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut adam = Adam::new(2);
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut x, &g, 0.01, None);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        let mut x = vec![1.0, 1.0];
        let mut adam = Adam::new(2);
        adam.step(&mut x, &[0.5, -4.0], 0.1, Some((1..2, 0.01)));
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] - 1.01).abs() < 1e-6);
    }

    #[test]
    fn plateau_reduces_after_patience() {
        let mut p = Plateau::new(2, 0.1);
        let mut lr = 1.0;
        lr = p.observe(1.0, lr);
        for _ in 0..2 {
            lr = p.observe(1.0, lr);
            assert_eq!(lr, 1.0);
        }
        lr = p.observe(1.0, lr);
        assert!((lr - 0.1).abs() < 1e-15);
        lr = p.observe(0.5, lr);
        assert!((lr - 0.1).abs() < 1e-15);
    }
}
