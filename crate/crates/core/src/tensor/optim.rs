//! AdamW with decoupled weight decay: parameters shrink by `lr * weight_decay`
//! before the moment-based update, so decay never enters the moment estimates.

use super::params::ParamSet;
use super::{Elem, Tensor};

#[derive(Debug, Clone)]
pub struct AdamW<E> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step_count: u64,
    m: Vec<Tensor<E>>,
    v: Vec<Tensor<E>>,
}

impl<E: Elem> AdamW<E> {
    pub fn new(params: &ParamSet<E>, lr: f64, weight_decay: f64) -> Self {
        let shapes: Vec<Tensor<E>> = params
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step_count: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. `grads` is indexed by parameter id; `None` entries (unused
    /// parameters this step) still receive weight decay and moment decay.
    pub fn step(&mut self, params: &mut ParamSet<E>, grads: &[Option<Tensor<E>>]) {
        assert_eq!(grads.len(), params.len());
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = E::from_f64(self.beta1);
        let b2 = E::from_f64(self.beta2);
        let one = E::one();
        let lr = E::from_f64(self.lr);
        let eps = E::from_f64(self.eps);
        let decay_mul = E::from_f64(1.0 - self.lr * self.weight_decay);
        let bias1 = E::from_f64(1.0 - self.beta1.powi(t));
        let bias2 = E::from_f64(1.0 - self.beta2.powi(t));

        for idx in 0..params.len() {
            let id = super::params::ParamId(idx);
            let p = params.get_mut(id);
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let zero_grad;
            let g = match &grads[idx] {
                Some(g) => g,
                None => {
                    zero_grad = Tensor::zeros(p.rows(), p.cols());
                    &zero_grad
                }
            };
            debug_assert_eq!(g.shape(), p.shape());
            for k in 0..p.numel() {
                let gk = g.data()[k];
                let pk = &mut p.data_mut()[k];
                *pk = *pk * decay_mul;
                let mk = &mut m.data_mut()[k];
                *mk = b1 * *mk + (one - b1) * gk;
                let vk = &mut v.data_mut()[k];
                *vk = b2 * *vk + (one - b2) * gk * gk;
                let mhat = *mk / bias1;
                let vhat = *vk / bias2;
                *pk = *pk - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
