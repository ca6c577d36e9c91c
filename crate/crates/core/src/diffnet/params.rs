use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// A trainable parameter with its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters, iterated in name order.
///
/// Every mutation of parameter *values* bumps `version`; forward caches
/// remember the version they were computed against, so a backward pass over
/// a stale cache is refused.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    version: u64,
    entries: BTreeMap<String, Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
            entries: self.entries.clone(),
        }
    }
}

impl PartialEq for ParamStore {
    /// Stores compare by contents (values and gradients), not identity.
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
            entries: BTreeMap::new(),
        }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub(crate) fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump(&mut self) {
        self.version += 1;
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::invalid(format!("parameter {name} already registered")));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(name, Param { value, grad });
        self.bump();
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.grad)
    }

    /// Mutable access to a value; counts as a parameter change.
    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.bump();
        self.entries
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.value_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(format!("set_value {name}"), slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.grad)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    /// Both slots of one parameter; values are only read through this.
    pub(crate) fn param_for_grad(&mut self, name: &str) -> Result<&mut Param> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.bump();
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, k: f64) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.entries.values().all(|p| p.grad.is_finite())
    }

    /// Snapshot of all gradients.
    pub fn grads(&self) -> BTreeMap<String, Tensor> {
        self.entries
            .iter()
            .map(|(k, p)| (k.clone(), p.grad.clone()))
            .collect()
    }

    /// Snapshot of all values.
    pub fn values(&self) -> BTreeMap<String, Tensor> {
        self.entries
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrites values from a name → tensor map covering exactly this store.
    pub fn load_values(&mut self, values: &BTreeMap<String, Tensor>) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(Error::invalid(format!(
                "parameter count mismatch: store has {}, source has {}",
                self.entries.len(),
                values.len()
            )));
        }
        for (name, v) in values {
            self.set_value(name, v.clone())?;
        }
        Ok(())
    }

    pub fn total_size(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }
}

/// Global-norm gradient clipping across several stores; returns the norm
/// before clipping.
pub fn clip_grad_norm(stores: &mut [&mut ParamStore], max_norm: f64) -> f64 {
    let norm = stores
        .iter()
        .map(|s| s.grad_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for s in stores.iter_mut() {
            s.scale_grads(k);
        }
    }
    norm
}
