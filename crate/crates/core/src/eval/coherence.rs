use serde::Serialize;

use crate::data::{MultimodalBatch, RingClassifier};
use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::gaussians::{geometric_mean_of_experts, mixture_of_experts, moe_sample, MeanFunction};
use crate::model::{Model, StyleSource};
use crate::rng::Rng;

/// Assigns a label to each row of one modality's observations.
pub trait Labeler {
    fn label(&self, modality: usize, x: &Tensor) -> Result<Vec<usize>>;
}

impl Labeler for RingClassifier {
    fn label(&self, modality: usize, x: &Tensor) -> Result<Vec<usize>> {
        self.classify(modality, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub joint: f64,
    pub joint_draws: usize,
    /// `cross[i][j]`: source `i`, target `j`; the diagonal is reconstruction.
    pub cross: Vec<Vec<f64>>,
    pub synergy_arithmetic: Vec<f64>,
    pub synergy_geometric: Vec<f64>,
    pub rows: usize,
}

fn agreement(a: &[usize], b: &[usize]) -> f64 {
    let hits = a.iter().zip(b).filter(|(x, y)| x == y).count();
    hits as f64 / a.len() as f64
}

fn check_split(split: &MultimodalBatch, model: &Model) -> Result<()> {
    if split.rows() == 0 {
        return Err(Error::invalid("coherence needs a non-empty split"));
    }
    if split.modality_dims() != model.spec().modality_dims {
        return Err(Error::ManifestMismatch(format!(
            "split dims {:?} but model dims {:?}",
            split.modality_dims(),
            model.spec().modality_dims
        )));
    }
    Ok(())
}

/// Fraction of `n` joint generations whose labels agree across all modalities.
pub fn joint_coherence(model: &Model, labeler: &dyn Labeler, n: usize, rng: &mut Rng) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("joint coherence needs at least one draw"));
    }
    let xs = model.joint_generate(n, rng)?;
    let labels = xs
        .iter()
        .enumerate()
        .map(|(i, x)| labeler.label(i, x))
        .collect::<Result<Vec<_>>>()?;
    let hits = (0..n).filter(|&r| labels.iter().all(|l| l[r] == labels[0][r])).count();
    Ok(hits as f64 / n as f64)
}

/// `M × M` label retention: off the diagonal, translate through the content
/// code with a prior style; on it, reconstruct with the encoded style.
pub fn cross_coherence(
    model: &Model,
    split: &MultimodalBatch,
    labeler: &dyn Labeler,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    check_split(split, model)?;
    let m = model.modalities();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        let truth = split.labels_of(i)?;
        for j in 0..m {
            let x = if i == j {
                let s = model.encode(i, &split.x[i])?.sample_style(rng);
                model.cross_generate(i, &split.x[i], j, StyleSource::Provided(&s), rng)?
            } else {
                model.cross_generate(i, &split.x[i], j, StyleSource::Prior, rng)?
            };
            out[i][j] = agreement(&labeler.label(j, &x)?, truth);
        }
    }
    Ok(out)
}

/// Per-modality label retention when every modality is reconstructed from the
/// aggregated content posterior and its own encoded style.
pub fn synergy_coherence(
    model: &Model,
    split: &MultimodalBatch,
    labeler: &dyn Labeler,
    mean_function: MeanFunction,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_split(split, model)?;
    let m = model.modalities();
    let rows = split.rows();
    let posts = (0..m)
        .map(|i| model.encode(i, &split.x[i]))
        .collect::<Result<Vec<_>>>()?;
    let dc = model.spec().content_dim;
    let mut content = Tensor::zeros(&[rows, dc]);
    for r in 0..rows {
        let experts: Vec<_> = posts.iter().map(|p| p.content(r)).collect();
        let c = match mean_function {
            MeanFunction::Geometric => geometric_mean_of_experts(&experts)?.sample(rng),
            MeanFunction::Arithmetic => moe_sample(&mixture_of_experts(&experts, None)?, rng),
        };
        content.row_mut(r).copy_from_slice(&c);
    }
    (0..m)
        .map(|i| {
            let s = posts[i].sample_style(rng);
            let x = model.decode(i, &s, &content)?;
            Ok(agreement(&labeler.label(i, &x)?, split.labels_of(i)?))
        })
        .collect()
}

/// Joint, cross and both synergy coherences on `split`.
pub fn coherence_report(
    model: &Model,
    split: &MultimodalBatch,
    labeler: &dyn Labeler,
    joint_draws: usize,
    rng: &mut Rng,
) -> Result<CoherenceReport> {
    Ok(CoherenceReport {
        joint: joint_coherence(model, labeler, joint_draws, rng)?,
        joint_draws,
        cross: cross_coherence(model, split, labeler, rng)?,
        synergy_arithmetic: synergy_coherence(model, split, labeler, MeanFunction::Arithmetic, rng)?,
        synergy_geometric: synergy_coherence(model, split, labeler, MeanFunction::Geometric, rng)?,
        rows: split.rows(),
    })
}
