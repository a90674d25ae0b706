use serde::{Deserialize, Serialize};

use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter with a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let n = store.len();
        self.first.resize(n, None);
        self.second.resize(n, None);
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.get(id).trainable {
                continue;
            }
            let Some(g) = grads.get(id) else { continue };
            let i = id.index();
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let p = store.value_mut(id).data_mut();
            for (((p, &g), m), v) in p.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Cosine annealing with warm restarts every `period` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineRestarts {
    pub lr_max: f64,
    pub lr_min: f64,
    pub period: usize,
}

impl CosineRestarts {
    pub fn lr(&self, step: usize) -> f64 {
        let t = (step % self.period.max(1)) as f64;
        self.at(t)
    }

    /// Learning rate at a (possibly fractional) position `t_cur` within a
    /// period.
    pub fn at(&self, t_cur: f64) -> f64 {
        let frac = t_cur / self.period.max(1) as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::matrix(1, 2, vec![0.5, -1.0]), true, "test");
        let mut grads = Gradients::new(1);
        grads.accumulate(id, &Tensor::zeros(&[1, 2]));
        let mut adam = Adam::default();
        adam.step(&mut store, &grads, 1e-3);
        assert_eq!(store.value(id).data(), &[0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.0), true, "test");
        let mut grads = Gradients::new(1);
        grads.accumulate(id, &Tensor::scalar(3.0));
        let mut adam = Adam::default();
        adam.step(&mut store, &grads, 0.1);
        assert!((store.value(id).item() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn fixed_params_untouched() {
        let mut store = ParamStore::new();
        let id = store.fixed("u", Tensor::scalar(2.0), "test");
        let mut grads = Gradients::new(1);
        grads.accumulate(id, &Tensor::scalar(1.0));
        Adam::default().step(&mut store, &grads, 0.1);
        assert_eq!(store.value(id).item(), 2.0);
    }

    #[test]
    fn schedule_endpoints() {
        let s = CosineRestarts { lr_max: 1e-3, lr_min: 1e-5, period: 10 };
        assert_eq!(s.lr(0), 1e-3);
        assert!((s.at(10.0) - 1e-5).abs() < 1e-18);
        assert!((s.lr(5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
        assert_eq!(s.lr(13), s.lr(3));
    }
}
