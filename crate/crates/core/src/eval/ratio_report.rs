use serde::Serialize;

use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::gaussians::Point;
use crate::model::rig::{self, Factor};
use crate::model::{assemble_log_ratios, FactorLogits, LinearGaussianRig, Model};
use crate::rng::Rng;

/// Anything that produces raw factor logits for `(X, S, c)` rows.
pub trait FactorLogitSource {
    fn factor_logits(&self, x: &[&Tensor], s: &[&Tensor], c: &Tensor) -> Result<Vec<FactorLogits>>;
}

impl FactorLogitSource for Model {
    fn factor_logits(&self, x: &[&Tensor], s: &[&Tensor], c: &Tensor) -> Result<Vec<FactorLogits>> {
        Model::factor_logits(self, x, s, c)
    }
}

/// The rig's own analytic factors, looked up row by row.
pub struct AnalyticFactors<'a>(pub &'a LinearGaussianRig);

impl FactorLogitSource for AnalyticFactors<'_> {
    fn factor_logits(&self, x: &[&Tensor], s: &[&Tensor], c: &Tensor) -> Result<Vec<FactorLogits>> {
        (0..c.rows())
            .map(|r| {
                let mut p = Point::new();
                for (j, (xj, sj)) in x.iter().zip(s).enumerate() {
                    p.insert(rig::x_name(j), xj.row(r).to_vec());
                    p.insert(rig::s_name(j), sj.row(r).to_vec());
                }
                p.insert(rig::CONTENT.to_string(), c.row(r).to_vec());
                self.0.factor_logits(&p)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub name: String,
    /// Mean absolute error under the evaluation mixture.
    pub mae: f64,
    pub max: f64,
    pub points: usize,
}

impl ErrorSummary {
    fn from_pairs(name: String, learned: &[f64], analytic: &[f64]) -> Self {
        let errs: Vec<f64> = learned.iter().zip(analytic).map(|(a, b)| (a - b).abs()).collect();
        ErrorSummary {
            name,
            mae: errs.iter().sum::<f64>() / errs.len() as f64,
            max: errs.iter().cloned().fold(0.0, f64::max),
            points: errs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    /// `C`, then `A_j`, `B_j` per modality.
    pub factors: Vec<ErrorSummary>,
    /// Assembled `log r_i` per modality.
    pub assembled: Vec<ErrorSummary>,
}

impl RatioReport {
    pub fn worst_assembled_mae(&self) -> f64 {
        self.assembled.iter().map(|e| e.mae).fold(0.0, f64::max)
    }
}

fn factor_value(f: &FactorLogits, factor: Factor) -> f64 {
    match factor {
        Factor::C => f.c,
        Factor::A(j) => f.a[j],
        Factor::B(j) => f.b[j],
    }
}

fn factor_name(factor: Factor) -> String {
    match factor {
        Factor::C => "c".into(),
        Factor::A(j) => format!("a{j}"),
        Factor::B(j) => format!("b{j}"),
    }
}

fn logits_at(source: &dyn FactorLogitSource, rig: &LinearGaussianRig, points: &[Point]) -> Result<Vec<FactorLogits>> {
    let (x, s, c) = rig.to_tensors(points)?;
    let xr: Vec<&Tensor> = x.iter().collect();
    let sr: Vec<&Tensor> = s.iter().collect();
    source.factor_logits(&xr, &sr, &c)
}

/// Learned vs analytic log-ratios on the rig. Each factor is scored on an
/// equal mix of its positive and negative distributions; assembled `log r_i`
/// on an equal mix of `q_i` and `p`.
pub fn ratio_oracle_report(
    source: &dyn FactorLogitSource,
    rig: &LinearGaussianRig,
    n: usize,
    rng: &mut Rng,
) -> Result<RatioReport> {
    if n < 2 {
        return Err(Error::invalid("ratio report needs at least two points"));
    }
    let m = rig.modalities();
    let mut factors_list = vec![Factor::C];
    for j in 0..m {
        factors_list.push(Factor::A(j));
        factors_list.push(Factor::B(j));
    }
    let mut factors = Vec::with_capacity(factors_list.len());
    for &factor in &factors_list {
        let mut points = Vec::with_capacity(n);
        for k in 0..n {
            let (pos, neg) = rig.sample_factor_pair(factor, rng)?;
            points.push(if k % 2 == 0 { pos } else { neg });
        }
        let learned = logits_at(source, rig, &points)?;
        let learned: Vec<f64> = learned.iter().map(|f| factor_value(f, factor)).collect();
        let analytic = points
            .iter()
            .map(|p| rig.factor_logits(p).map(|f| factor_value(&f, factor)))
            .collect::<Result<Vec<_>>>()?;
        factors.push(ErrorSummary::from_pairs(factor_name(factor), &learned, &analytic));
    }
    let mut assembled = Vec::with_capacity(m);
    for i in 0..m {
        let points: Vec<Point> = (0..n)
            .map(|k| if k % 2 == 0 { rig.sample_encoder(i, rng) } else { rig.sample_decoder(rng) })
            .collect();
        let learned: Vec<f64> = logits_at(source, rig, &points)?
            .iter()
            .map(|f| assemble_log_ratios(f)[i])
            .collect();
        let analytic = points
            .iter()
            .map(|p| rig.joint_log_ratio(i, p))
            .collect::<Result<Vec<_>>>()?;
        assembled.push(ErrorSummary::from_pairs(format!("log_r{i}"), &learned, &analytic));
    }
    Ok(RatioReport { factors, assembled })
}

/// Checks that a model's shapes fit the rig before reporting.
pub fn check_rig_matches(model: &Model, rig: &LinearGaussianRig) -> Result<()> {
    let spec = model.spec();
    if spec.modality_dims != rig.modality_dims() || spec.content_dim != rig.content_dim() || spec.style_dim != rig.style_dim() {
        return Err(Error::ManifestMismatch(format!(
            "model dims {:?}/{}/{} vs rig {:?}/{}/{}",
            spec.modality_dims,
            spec.content_dim,
            spec.style_dim,
            rig.modality_dims(),
            rig.content_dim(),
            rig.style_dim()
        )));
    }
    Ok(())
}

/// `∫ w |f − g| / ∫ w` on a uniform grid of `n` points over `[lo, hi]`.
pub fn density_weighted_mae(
    learned: impl Fn(f64) -> f64,
    analytic: impl Fn(f64) -> f64,
    weight: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        let x = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        let w = weight(x);
        num += w * (learned(x) - analytic(x)).abs();
        den += w;
    }
    num / den
}
