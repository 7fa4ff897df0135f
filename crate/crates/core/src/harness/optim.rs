use crate::params::ParamStore;
use crate::scalar::Scalar;

use super::config::TrainConfig;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: &TrainConfig, store: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = store.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Self {
            lr: T::lit(cfg.lr),
            beta1: T::lit(cfg.beta1),
            beta2: T::lit(cfg.beta2),
            eps: T::lit(cfg.eps),
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.data.len() {
                let g = p.grad.data[i];
                m[i] = self.beta1 * m[i] + (one - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value.data[i] = p.value.data[i] - self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(store: &mut ParamStore<T>, max_norm: T) -> T {
    let norm = store.grad_norm();
    if norm > max_norm {
        let c = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.data.iter_mut().for_each(|g| *g = *g * c);
        }
    }
    norm
}
