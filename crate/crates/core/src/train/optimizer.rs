//! Decoupled-weight-decay adaptive-moment optimizer over named parameters.

use std::collections::{BTreeMap, HashMap};

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::model::params::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    /// Exponential decay factor applied per epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 2.0e-4,
            lr_decay: 0.998,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl OptimizerConfig {
    /// lr(epoch) = lr * decay^epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}

/// First/second moment estimates for one parameter group.
#[derive(Debug, Clone)]
pub struct AdamWState<T: Scalar> {
    pub step: u64,
    pub m1: BTreeMap<String, ArrayD<T>>,
    pub m2: BTreeMap<String, ArrayD<T>>,
}

impl<T: Scalar> Default for AdamWState<T> {
    fn default() -> Self {
        AdamWState { step: 0, m1: BTreeMap::new(), m2: BTreeMap::new() }
    }
}

impl<T: Scalar> AdamWState<T> {
    /// Apply one update. Only parameters that received a gradient are
    /// touched: moments, decay and all. Traversal order is sorted by name
    /// for determinism.
    pub fn apply(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &HashMap<String, ArrayD<T>>,
        lr: f64,
        cfg: &OptimizerConfig,
    ) {
        if grads.is_empty() {
            return;
        }
        self.step += 1;
        let b1 = T::from_config(cfg.beta1);
        let b2 = T::from_config(cfg.beta2);
        let one = T::one();
        let eps = T::from_config(cfg.eps);
        let lr_t = T::from_config(lr);
        let wd = T::from_config(cfg.weight_decay);
        let bias1 = T::from_config(1.0 - cfg.beta1.powi(self.step as i32));
        let bias2 = T::from_config(1.0 - cfg.beta2.powi(self.step as i32));

        let mut names: Vec<&String> = grads.keys().collect();
        names.sort();
        for name in names {
            let g = &grads[name];
            let m1 = self
                .m1
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let m2 = self
                .m2
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));

            ndarray::Zip::from(&mut *m1).and(g).for_each(|m, &gv| {
                *m = b1 * *m + (one - b1) * gv;
            });
            ndarray::Zip::from(&mut *m2).and(g).for_each(|m, &gv| {
                *m = b2 * *m + (one - b2) * gv * gv;
            });

            params.update(name, |p| {
                ndarray::Zip::from(p).and(&*m1).and(&*m2).for_each(|pv, &m1v, &m2v| {
                    let m_hat = m1v / bias1;
                    let v_hat = m2v / bias2;
                    // Decoupled weight decay.
                    *pv = *pv - lr_t * (m_hat / (v_hat.sqrt() + eps) + wd * *pv);
                });
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ParamInit;
    use ndarray::IxDyn;

    fn store_with(name: &str, value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert(name, ArrayD::from_elem(IxDyn(&[2, 2]), value));
        s
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut store = store_with("w", 0.7);
        let mut state = AdamWState::default();
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
        state.apply(&mut store, &grads, 0.0, &OptimizerConfig::default());
        assert!(store.get("w").iter().all(|&v| v == 0.7));
    }

    #[test]
    fn updates_move_against_the_gradient() {
        let mut store = store_with("w", 0.7);
        let mut state = AdamWState::default();
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
        state.apply(&mut store, &grads, 1e-2, &OptimizerConfig::default());
        assert!(store.get("w").iter().all(|&v| v < 0.7));
        assert_eq!(state.step, 1);
    }

    #[test]
    fn parameters_without_gradients_stay_untouched() {
        let mut store = store_with("w", 0.7);
        store.insert("frozen", ArrayD::from_elem(IxDyn(&[1]), 1.0));
        let mut state = AdamWState::default();
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), ArrayD::from_elem(IxDyn(&[2, 2]), 1.0));
        state.apply(&mut store, &grads, 1e-2, &OptimizerConfig::default());
        assert_eq!(store.get("frozen")[[0]], 1.0);
        assert!(!state.m1.contains_key("frozen"));
    }

    #[test]
    fn lr_schedule_is_exponential() {
        let cfg = OptimizerConfig::default();
        for epoch in [0usize, 1, 7, 29, 199] {
            let expect = 2.0e-4 * 0.998f64.powi(epoch as i32);
            let got = cfg.lr_at(epoch);
            assert!(((got - expect) / expect).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_param_init_is_deterministic() {
        let mut a = ParamInit::new(3);
        let mut b = ParamInit::new(3);
        let x: ArrayD<f32> = a.randn(&[3, 4], 0.1);
        let y: ArrayD<f32> = b.randn(&[3, 4], 0.1);
        assert_eq!(x, y);
    }
}
