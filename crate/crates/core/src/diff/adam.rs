use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ParamInfo, ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

/// Adam with bias correction. Moments and step counts are tracked per
/// parameter, so a parameter skipped by a step keeps its own schedule.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    state: HashMap<String, Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, state: HashMap::new() }
    }

    /// Updates every parameter that has a gradient and passes `select`, then
    /// clears all gradients in the store.
    pub fn step(&mut self, store: &mut ParamStore<T>, select: impl Fn(ParamInfo) -> bool) {
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one, eps) = (T::one(), T::of(c.eps));
        for (name, tensor, info) in store.iter_mut() {
            let Some(grad) = tensor.grad.take() else { continue };
            if !select(info) {
                continue;
            }
            let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![T::zero(); grad.len()],
                v: vec![T::zero(); grad.len()],
                t: 0,
            });
            st.t += 1;
            let bc1 = 1.0 - c.beta1.powi(st.t as i32);
            let bc2 = 1.0 - c.beta2.powi(st.t as i32);
            let step = T::of(c.lr / bc1);
            let bc2 = T::of(bc2);
            for (((p, &g), m), v) in tensor.data_mut().iter_mut().zip(&grad).zip(&mut st.m).zip(&mut st.v) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= step * *m / ((*v / bc2).sqrt() + eps);
            }
        }
        store.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{Branch, Part, Tensor};

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new();
        let info = ParamInfo { branch: Branch::Primary, part: Part::Encoder };
        store.insert("w", Tensor::new(&[2], vec![1.0, -1.0]).unwrap(), info).unwrap();
        store.get_mut("w").unwrap().accumulate_grad(&[3.0, -0.5]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut store, |_| true);
        let w = store.get("w").unwrap().data();
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (-1.0 + 1e-3)).abs() < 1e-9);
        assert!(store.get("w").unwrap().grad.is_none());
    }

    #[test]
    fn filtered_out_params_do_not_move() {
        let mut store = ParamStore::<f32>::new();
        store.insert("a", Tensor::full(&[1], 1.0), ParamInfo { branch: Branch::Primary, part: Part::Encoder }).unwrap();
        store.insert("b", Tensor::full(&[1], 1.0), ParamInfo { branch: Branch::Fusion, part: Part::Classifier }).unwrap();
        for name in ["a", "b"] {
            store.get_mut(name).unwrap().accumulate_grad(&[1.0]);
        }
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut store, |i| i.branch == Branch::Fusion);
        assert_eq!(store.get("a").unwrap().data()[0], 1.0);
        assert!(store.get("b").unwrap().data()[0] < 1.0);
    }
}
