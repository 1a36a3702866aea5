//! SGD with momentum and decoupled-from-nothing weight decay: the decay term
//! joins the gradient before the momentum buffer, i.e.
//! `buf ← m·buf + (grad + wd·p)`, then `p ← p − lr·buf`.

use std::collections::BTreeMap;

use crate::tensor::{GradientMap, Tensor};

#[derive(Clone, Debug)]
pub struct OptState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: BTreeMap<String, Tensor>,
}

impl OptState {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        OptState {
            learning_rate,
            momentum,
            weight_decay,
            buffers: BTreeMap::new(),
        }
    }

    /// Update every parameter that has a gradient; parameters absent from the
    /// map are left untouched (their buffers keep their last state).
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)], grads: &GradientMap) {
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = grads.get(name) else {
                continue;
            };
            debug_assert_eq!(grad.shape(), tensor.shape(), "gradient shape for {name}");
            let buf = self
                .buffers
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(tensor.shape().to_vec()));
            let (m, wd, lr) = (self.momentum, self.weight_decay, self.learning_rate);
            for ((b, &g), p) in buf
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(tensor.data_mut())
            {
                *b = m * *b + g + wd * *p;
                *p -= lr * *b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn update_matches_hand_rolled_oracle() {
        let mut rng = Rng::new(20);
        let shape = vec![3, 4];
        let mut p = Tensor::from_fn(3, 4, |_, _| rng.normal());
        let p0 = p.clone();
        let g1 = Tensor::from_fn(3, 4, |_, _| rng.normal());
        let g2 = Tensor::from_fn(3, 4, |_, _| rng.normal());

        let (lr, m, wd) = (0.05, 0.9, 1e-3);
        let mut opt = OptState::new(lr, m, wd);
        let mut grads = GradientMap::new();
        grads.insert("p".into(), g1.clone());
        opt.step(&mut [("p".into(), &mut p)], &grads);
        grads.insert("p".into(), g2.clone());
        opt.step(&mut [("p".into(), &mut p)], &grads);

        // oracle: explicit two-step recurrence
        let mut want = p0.clone();
        let mut buf = Tensor::zeros(shape);
        for g in [&g1, &g2] {
            for i in 0..12 {
                buf.data_mut()[i] = m * buf.data()[i] + g.data()[i] + wd * want.data()[i];
                want.data_mut()[i] -= lr * buf.data()[i];
            }
        }
        assert!(p.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn params_without_gradients_stay_put() {
        let mut p = Tensor::scalar(1.0);
        let mut q = Tensor::scalar(2.0);
        let mut opt = OptState::new(0.1, 0.9, 0.0);
        let mut grads = GradientMap::new();
        grads.insert("p".into(), Tensor::scalar(1.0));
        opt.step(&mut [("p".into(), &mut p), ("q".into(), &mut q)], &grads);
        assert!(p.item() < 1.0);
        assert_eq!(q.item(), 2.0);
    }

    #[test]
    fn zero_momentum_zero_decay_is_plain_sgd() {
        let mut p = Tensor::scalar(1.0);
        let mut opt = OptState::new(0.5, 0.0, 0.0);
        let mut grads = GradientMap::new();
        grads.insert("p".into(), Tensor::scalar(0.4));
        opt.step(&mut [("p".into(), &mut p)], &grads);
        assert!((p.item() - 0.8).abs() < 1e-15);
    }
}
