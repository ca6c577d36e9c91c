use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Exponential moving average of a parameter store.
///
/// Before `start_iteration` the shadow tracks the live parameters exactly;
/// from then on `shadow = decay * shadow + (1 - decay) * params`.
#[derive(Debug, Clone)]
pub struct Ema {
    decay: f64,
    start_iteration: usize,
    shadow: Option<BTreeMap<String, Tensor>>,
}

impl Ema {
    pub fn new(decay: f64, start_iteration: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::invalid(format!("EMA decay must lie in [0, 1), got {decay}")));
        }
        Ok(Ema {
            decay,
            start_iteration,
            shadow: None,
        })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn start_iteration(&self) -> usize {
        self.start_iteration
    }

    pub fn update(&mut self, params: &ParamStore, iteration: usize) -> Result<()> {
        let shadow = match &mut self.shadow {
            Some(s) if iteration >= self.start_iteration => s,
            _ => {
                self.shadow = Some(params.values());
                return Ok(());
            }
        };
        if shadow.len() != params.len() {
            return Err(Error::invalid("EMA shadow and parameters disagree on names"));
        }
        let d = self.decay;
        for (name, p) in params.iter() {
            let s = shadow
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("EMA has no shadow for {name}")))?;
            if s.shape() != p.value.shape() {
                return Err(Error::shape(format!("EMA shadow {name}"), s.shape(), p.value.shape()));
            }
            for (sv, &pv) in s.data_mut().iter_mut().zip(p.value.data()) {
                *sv = d * *sv + (1.0 - d) * pv;
            }
        }
        Ok(())
    }

    /// The shadow parameters; `None` until the first update.
    pub fn shadow(&self) -> Option<&BTreeMap<String, Tensor>> {
        self.shadow.as_ref()
    }

    /// Writes the shadow into `store` (for evaluation with averaged weights).
    pub fn copy_to(&self, store: &mut ParamStore) -> Result<()> {
        let shadow = self
            .shadow
            .as_ref()
            .ok_or_else(|| Error::invalid("EMA shadow read before its first update"))?;
        store.load_values(shadow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![v])).unwrap();
        s
    }

    fn shadow_w(e: &Ema) -> f64 {
        e.shadow().unwrap()["w"].data()[0]
    }

    #[test]
    fn recurrence() {
        let mut e = Ema::new(0.9999, 0).unwrap();
        e.update(&store(1.0), 0).unwrap();
        e.update(&store(0.0), 1).unwrap();
        assert!((shadow_w(&e) - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn warmup_copies() {
        let mut e = Ema::new(0.9999, 10).unwrap();
        for (it, v) in [(0, 1.0), (5, -3.0), (9, 0.125)] {
            e.update(&store(v), it).unwrap();
            assert_eq!(shadow_w(&e), v);
        }
        e.update(&store(1.125), 10).unwrap();
        assert!((shadow_w(&e) - (0.9999 * 0.125 + 0.0001 * 1.125)).abs() < 1e-15);
    }

    #[test]
    fn zero_decay_tracks_params() {
        let mut e = Ema::new(0.0, 0).unwrap();
        e.update(&store(2.0), 0).unwrap();
        e.update(&store(-4.0), 1).unwrap();
        assert_eq!(shadow_w(&e), -4.0);
    }

    #[test]
    fn no_read_before_update() {
        let e = Ema::new(0.5, 0).unwrap();
        assert!(e.shadow().is_none());
        assert!(e.copy_to(&mut store(0.0)).is_err());
    }

    #[test]
    fn decay_range_checked() {
        assert!(Ema::new(1.0, 0).is_err());
        assert!(Ema::new(-0.1, 0).is_err());
    }
}
