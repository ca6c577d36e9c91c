use super::objectives::logistic_loss;
use crate::diffnet::{Adam, AdamConfig, Mlp, MlpSpec, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::gaussians::Point;
use crate::model::rig::Factor;
use crate::model::{Discriminators, LinearGaussianRig, Model};
use crate::rng::Rng;

/// A lone binary classifier whose logit estimates `log p_pos / p_neg`.
#[derive(Debug, Clone)]
pub struct BinaryFit {
    pub net: Mlp,
    pub store: ParamStore,
    /// Mean logistic loss over the last 100 steps.
    pub final_loss: f64,
}

impl BinaryFit {
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.net.predict(&self.store, x)
    }
}

/// Trains a classifier between two samplers for `steps` Adam steps on fresh
/// batches of `batch` positives and `batch` negatives.
pub fn fit_binary_logit(
    spec: MlpSpec,
    adam: AdamConfig,
    steps: usize,
    batch: usize,
    mut positive: impl FnMut(usize, &mut Rng) -> Tensor,
    mut negative: impl FnMut(usize, &mut Rng) -> Tensor,
    rng: &mut Rng,
) -> Result<BinaryFit> {
    let net = Mlp::new("ratio", spec);
    let mut store = ParamStore::new();
    net.register(&mut store, rng)?;
    let mut opt = Adam::new(adam)?;
    let mut recent = Vec::with_capacity(100);
    for step in 0..steps {
        let pos = positive(batch, rng);
        let neg = negative(batch, rng);
        let input = Tensor::vcat(&[&pos, &neg])?;
        let (logits, cache) = net.forward(&store, &input)?;
        let (loss, grad) = logistic_loss(&logits, pos.rows());
        net.backward(&mut store, &cache, &grad)?;
        opt.step(&mut store)?;
        if step + 100 >= steps {
            recent.push(loss);
        }
    }
    let final_loss = if recent.is_empty() {
        f64::NAN
    } else {
        recent.iter().sum::<f64>() / recent.len() as f64
    };
    Ok(BinaryFit { net, store, final_loss })
}

fn factor_input(factor: Factor, points: &[Point], rig: &LinearGaussianRig) -> Result<Tensor> {
    let (x, s, c) = rig.to_tensors(points)?;
    match factor {
        Factor::C => Tensor::hcat(&x.iter().collect::<Vec<_>>()),
        Factor::A(j) | Factor::B(j) => Tensor::hcat(&[&x[j], &s[j], &c]),
    }
}

/// Trains a factorized model's discriminators on samples from the rig's
/// encoder and decoder systems instead of the model's own networks.
/// Returns the mean total logistic loss over the last 100 steps.
pub fn fit_rig_discriminators(
    model: &mut Model,
    rig: &LinearGaussianRig,
    adam: AdamConfig,
    steps: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let m = rig.modalities();
    let mut factors = vec![Factor::C];
    for j in 0..m {
        factors.push(Factor::A(j));
        factors.push(Factor::B(j));
    }
    let mut opt = Adam::new(adam)?;
    let parts = model.parts_mut();
    let Discriminators::Factorized(e) = parts.discriminators else {
        return Err(Error::invalid("rig fitting needs factorized discriminators"));
    };
    let store = parts.discriminator;
    let mut recent = Vec::with_capacity(100);
    for step in 0..steps {
        let mut total = 0.0;
        for &factor in &factors {
            let mut pos = Vec::with_capacity(batch);
            let mut neg = Vec::with_capacity(batch);
            for _ in 0..batch {
                let (p, n) = rig.sample_factor_pair(factor, rng)?;
                pos.push(p);
                neg.push(n);
            }
            pos.extend(neg);
            let input = factor_input(factor, &pos, rig)?;
            let net = match factor {
                Factor::C => &e.c,
                Factor::A(j) => &e.a[j],
                Factor::B(j) => &e.b[j],
            };
            let (logits, cache) = net.forward(store, &input)?;
            let (loss, grad) = logistic_loss(&logits, batch);
            net.backward(store, &cache, &grad)?;
            total += loss;
        }
        opt.step(store)?;
        if step + 100 >= steps {
            recent.push(total);
        }
    }
    Ok(recent.iter().sum::<f64>() / recent.len().max(1) as f64)
}
