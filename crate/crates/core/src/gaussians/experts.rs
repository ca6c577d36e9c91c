//! Aggregating unimodal Gaussian posteriors into a multimodal one.

use super::diag::DiagGaussian;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Which mean function turns unimodal posteriors into a joint posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanFunction {
    /// Uniform mixture of experts.
    #[default]
    Arithmetic,
    /// Normalized K-th root of the product of expert densities.
    Geometric,
}

impl MeanFunction {
    pub fn name(self) -> &'static str {
        match self {
            MeanFunction::Arithmetic => "arithmetic",
            MeanFunction::Geometric => "geometric",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "arithmetic" => Ok(MeanFunction::Arithmetic),
            "geometric" => Ok(MeanFunction::Geometric),
            other => Err(Error::invalid(format!("unknown mean function {other}"))),
        }
    }
}

fn check_experts(experts: &[DiagGaussian]) -> Result<usize> {
    let first = experts
        .first()
        .ok_or_else(|| Error::invalid("expert aggregation needs at least one expert"))?;
    let dim = first.dim();
    for (k, e) in experts.iter().enumerate() {
        if e.dim() != dim {
            return Err(Error::shape(format!("expert {k}"), &[dim], &[e.dim()]));
        }
    }
    Ok(dim)
}

/// Precision-weighted combination shared by PoE and the geometric mean. The
/// geometric mean divides the summed precision by K. Coordinates on which
/// all experts agree are returned untouched, so the geometric mean of
/// identical experts is exact.
fn precision_weighted(experts: &[DiagGaussian], average: bool) -> Result<DiagGaussian> {
    let dim = check_experts(experts)?;
    let precision_scale = if average { 1.0 / experts.len() as f64 } else { 1.0 };
    let keeps_precision = average || experts.len() == 1;
    let mut mean = Vec::with_capacity(dim);
    let mut log_var = Vec::with_capacity(dim);
    for d in 0..dim {
        let lvs: Vec<f64> = experts.iter().map(|e| e.log_var()[d]).collect();
        let mus: Vec<f64> = experts.iter().map(|e| e.mean()[d]).collect();
        // log of summed precision via log-sum-exp over -log_var.
        let max_neg = lvs.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = lvs.iter().map(|v| (-v - max_neg).exp()).collect();
        let wsum: f64 = weights.iter().sum();

        let m = if mus.iter().all(|&m| m == mus[0]) {
            mus[0]
        } else {
            weights.iter().zip(&mus).map(|(w, m)| w * m).sum::<f64>() / wsum
        };
        let lv = if keeps_precision && lvs.iter().all(|&v| v == lvs[0]) {
            lvs[0]
        } else {
            -(max_neg + wsum.ln() + precision_scale.ln())
        };
        mean.push(m);
        log_var.push(lv);
    }
    DiagGaussian::new(mean, log_var)
}

/// Product of experts: precisions add, means are precision-weighted.
pub fn product_of_experts(experts: &[DiagGaussian]) -> Result<DiagGaussian> {
    precision_weighted(experts, false)
}

/// Geometric mean of K experts: the normalized `(∏ p_k)^{1/K}`. The
/// precision is the average expert precision; the mean is the same
/// precision-weighted mean as the product.
pub fn geometric_mean_of_experts(experts: &[DiagGaussian]) -> Result<DiagGaussian> {
    precision_weighted(experts, true)
}

/// Finite mixture of diagonal Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<DiagGaussian>,
    weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(components: Vec<DiagGaussian>, weights: Vec<f64>) -> Result<Self> {
        check_experts(&components)?;
        if weights.len() != components.len() {
            return Err(Error::shape(
                "mixture weights",
                &[components.len()],
                &[weights.len()],
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("mixture weights must be nonnegative: {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(GaussianMixture {
            components,
            weights,
        })
    }

    pub fn uniform(components: Vec<DiagGaussian>) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        Self::new(components, vec![1.0 / k as f64; k])
    }

    pub fn components(&self) -> &[DiagGaussian] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        let terms = self
            .components
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(c, &w)| Ok(w.ln() + c.log_pdf(x)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(&terms))
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_pdf(x)?.exp())
    }

    /// Picks a component by weight, then samples it.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let k = self.pick_component(rng.uniform());
        self.components[k].sample(rng)
    }

    fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        // u landed in the rounding slack above the last cumulative weight.
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// Mixture of experts; `weights = None` means uniform `1/K`.
pub fn mixture_of_experts(experts: &[DiagGaussian], weights: Option<&[f64]>) -> Result<GaussianMixture> {
    match weights {
        Some(w) => GaussianMixture::new(experts.to_vec(), w.to_vec()),
        None => GaussianMixture::uniform(experts.to_vec()),
    }
}

pub fn moe_sample(mixture: &GaussianMixture, rng: &mut Rng) -> Vec<f64> {
    mixture.sample(rng)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
