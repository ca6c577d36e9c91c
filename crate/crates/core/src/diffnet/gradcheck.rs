//! Central finite differences, the oracle for every hand-written backward pass.

use std::collections::BTreeMap;

use super::mlp::Mlp;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::Result;

/// `(f(θ + h e_k) − f(θ − h e_k)) / 2h` for every coordinate of every parameter.
pub fn finite_difference_grad<F>(store: &ParamStore, mut loss: F, h: f64) -> Result<BTreeMap<String, Tensor>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut probe = store.clone();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut out = BTreeMap::new();
    for name in names {
        let n = probe.value(&name)?.len();
        let mut g = Tensor::zeros(probe.value(&name)?.shape());
        for k in 0..n {
            let orig = probe.value(&name)?.data()[k];
            probe.value_mut(&name)?.data_mut()[k] = orig + h;
            let plus = loss(&probe)?;
            probe.value_mut(&name)?.data_mut()[k] = orig - h;
            let minus = loss(&probe)?;
            probe.value_mut(&name)?.data_mut()[k] = orig;
            g.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        out.insert(name, g);
    }
    Ok(out)
}

/// Finite-difference gradient of `loss(mlp(input))`.
pub fn mlp_finite_difference_grad<F>(
    mlp: &Mlp,
    store: &ParamStore,
    input: &Tensor,
    loss: F,
    h: f64,
) -> Result<BTreeMap<String, Tensor>>
where
    F: Fn(&Tensor) -> f64,
{
    finite_difference_grad(store, |s| Ok(loss(&mlp.predict(s, input)?)), h)
}

/// Largest `|a − b| / (|b| + floor)` over matching entries; `b` is the reference.
pub fn max_relative_error(
    computed: &BTreeMap<String, Tensor>,
    reference: &BTreeMap<String, Tensor>,
    floor: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, r) in reference {
        let Some(c) = computed.get(name) else {
            return f64::INFINITY;
        };
        for (&cv, &rv) in c.data().iter().zip(r.data()) {
            worst = worst.max((cv - rv).abs() / (rv.abs() + floor));
        }
    }
    worst
}
