use std::collections::BTreeMap;

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// lr 2e-4 with beta1 = 0.5, the usual GAN setting.
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_beta = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0) || !(self.eps > 0.0) || !ok_beta(self.beta1) || !ok_beta(self.beta2) {
            return Err(Error::invalid(format!("invalid Adam hyper-parameters {self:?}")));
        }
        Ok(())
    }
}

/// Adam with bias correction. Moments are kept per parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Non-finite gradients abort the step before any parameter moves.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if !store.grads_finite() {
            let bad: Vec<&str> = store
                .iter()
                .filter(|(_, p)| !p.grad.is_finite())
                .map(|(n, _)| n)
                .collect();
            return Err(Error::NonFinite(format!("gradients of {bad:?}")));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (name, p) in store.params_mut() {
            let n = p.value.len();
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let g = p.grad.data_mut();
            let w = p.value.data_mut();
            for k in 0..n {
                let gk = g[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                g[k] = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Tensor;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![w])).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.25] {
            let mut s = scalar_store(1.0);
            s.grad_mut("w").unwrap().data_mut()[0] = g;
            let mut adam = Adam::new(AdamConfig::default()).unwrap();
            adam.step(&mut s).unwrap();
            let w = s.value("w").unwrap().data()[0];
            let expected = 1.0 - 2e-4 * g / (g.abs() + 1e-8);
            assert!((w - expected).abs() < 1e-15);
            assert!((w - (1.0 - 2e-4 * g.signum())).abs() < 1e-11);
            assert_eq!(s.grad("w").unwrap().data()[0], 0.0);
            assert_eq!(adam.steps(), 1);
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op_but_counts() {
        let mut s = scalar_store(0.7);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(&mut s).unwrap();
        adam.step(&mut s).unwrap();
        assert_eq!(s.value("w").unwrap().data()[0], 0.7);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn quadratic_decreases_monotonically() {
        // f(w) = w^2 from w = 1, lr 0.1. Hand trace:
        // step 1: g = 2, m̂ = 2, v̂ = 4, w = 1 - 0.1 = 0.9
        // step 2: g = 1.8, m = 1.4, m̂ = 1.8667, v = 0.007236, v̂ = 3.61981,
        //         w = 0.9 - 0.1 * 1.8667 / 1.90258 = 0.801888
        let mut s = scalar_store(1.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1)).unwrap();
        let mut f_prev = 1.0;
        for expected_w in [0.9, 0.801_888] {
            let w = s.value("w").unwrap().data()[0];
            s.grad_mut("w").unwrap().data_mut()[0] = 2.0 * w;
            adam.step(&mut s).unwrap();
            let w = s.value("w").unwrap().data()[0];
            assert!((w - expected_w).abs() < 1e-6, "w = {w}");
            assert!(w * w < f_prev);
            f_prev = w * w;
        }
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut s = scalar_store(1.0);
        s.grad_mut("w").unwrap().data_mut()[0] = f64::NAN;
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        assert!(adam.step(&mut s).is_err());
        assert_eq!(s.value("w").unwrap().data()[0], 1.0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(Adam::new(AdamConfig { beta1: 1.0, ..AdamConfig::default() }).is_err());
        assert!(Adam::new(AdamConfig { lr: 0.0, ..AdamConfig::default() }).is_err());
        assert!(Adam::new(AdamConfig { eps: 0.0, ..AdamConfig::default() }).is_err());
    }
}
