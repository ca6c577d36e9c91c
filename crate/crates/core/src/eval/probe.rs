use serde::Serialize;

use crate::data::MultimodalBatch;
use crate::diffnet::{Activation, Adam, AdamConfig, Mlp, MlpSpec, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::Rng;
use crate::training::cross_entropy;

pub const PROBE_STEPS: usize = 2000;
pub const PROBE_LR: f64 = 0.01;

/// Which posterior means of modality `i` feed the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CodeSelector {
    Content(usize),
    Style(usize),
    Both(usize),
}

impl CodeSelector {
    pub fn name(self) -> String {
        match self {
            CodeSelector::Content(i) => format!("content{i}"),
            CodeSelector::Style(i) => format!("style{i}"),
            CodeSelector::Both(i) => format!("both{i}"),
        }
    }

    pub fn features(self, model: &Model, split: &MultimodalBatch) -> Result<Tensor> {
        let i = match self {
            CodeSelector::Content(i) | CodeSelector::Style(i) | CodeSelector::Both(i) => i,
        };
        let post = model.encode(i, split.x.get(i).ok_or_else(|| Error::invalid(format!("no modality {i}")))?)?;
        match self {
            CodeSelector::Content(_) => Ok(post.content_mean),
            CodeSelector::Style(_) => Ok(post.style_mean),
            CodeSelector::Both(_) => Tensor::hcat(&[&post.content_mean, &post.style_mean]),
        }
    }
}

/// Softmax regression on standardized features.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    net: Mlp,
    store: ParamStore,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(x: &Tensor, shift: &[f64], scale: &[f64]) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(shift).zip(scale) {
            *v = (*v - m) / s;
        }
    }
    out
}

impl LinearProbe {
    /// Full-batch Adam on the mean cross-entropy.
    pub fn fit(features: &Tensor, labels: &[usize], classes: usize, steps: usize, lr: f64, seed: u64) -> Result<Self> {
        let (n, d) = (features.rows(), features.cols());
        if labels.len() != n {
            return Err(Error::shape("probe labels", &[n], &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
        }
        if labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::invalid("probe needs at least two distinct labels"));
        }
        let mut shift = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for r in 0..n {
            for (k, v) in features.row(r).iter().enumerate() {
                shift[k] += v / n as f64;
            }
        }
        for r in 0..n {
            for (k, v) in features.row(r).iter().enumerate() {
                scale[k] += (v - shift[k]).powi(2) / n as f64;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        let x = standardize(features, &shift, &scale);
        let net = Mlp::new("probe", MlpSpec::new(vec![d, classes], Activation::Tanh)?);
        let mut store = ParamStore::new();
        net.register(&mut store, &mut Rng::seed_from(seed))?;
        let mut opt = Adam::new(AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })?;
        for _ in 0..steps {
            let (logits, cache) = net.forward(&store, &x)?;
            let (_, grad) = cross_entropy(&logits, labels);
            net.backward(&mut store, &cache, &grad)?;
            opt.step(&mut store)?;
        }
        Ok(LinearProbe { net, store, shift, scale })
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        let logits = self.net.predict(&self.store, &standardize(features, &self.shift, &self.scale))?;
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect())
    }

    pub fn accuracy(&self, features: &Tensor, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(features)?;
        if pred.is_empty() {
            return Err(Error::invalid("probe accuracy on an empty split"));
        }
        Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / pred.len() as f64)
    }
}

/// Test accuracy of a probe fit on the train split's posterior means.
pub fn latent_probe(
    model: &Model,
    train: &MultimodalBatch,
    test: &MultimodalBatch,
    selector: CodeSelector,
    classes: usize,
    seed: u64,
) -> Result<f64> {
    let i = match selector {
        CodeSelector::Content(i) | CodeSelector::Style(i) | CodeSelector::Both(i) => i,
    };
    let fx = selector.features(model, train)?;
    if fx.cols() == 0 {
        return Err(Error::invalid(format!("selector {} has no features", selector.name())));
    }
    let probe = LinearProbe::fit(&fx, train.labels_of(i)?, classes, PROBE_STEPS, PROBE_LR, seed)?;
    probe.accuracy(&selector.features(model, test)?, test.labels_of(i)?)
}
