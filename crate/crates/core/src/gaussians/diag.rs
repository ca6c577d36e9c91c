use crate::error::{Error, Result};
use crate::rng::Rng;

/// Bounds applied to every log-variance at construction.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian with diagonal covariance, parameterized by mean and log-variance.
///
/// Log-variances are clamped into `[LOG_VAR_MIN, LOG_VAR_MAX]`; a zero-length
/// Gaussian is valid and stands for an absent code.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::shape("DiagGaussian mean/log_var", &[mean.len()], &[log_var.len()]));
        }
        if mean.iter().chain(&log_var).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DiagGaussian parameters".into()));
        }
        let log_var = log_var
            .into_iter()
            .map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX))
            .collect();
        Ok(DiagGaussian { mean, log_var })
    }

    /// `N(0, I)` in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }

    pub fn precision(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| (-v).exp()).collect()
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::shape("DiagGaussian::log_pdf point", &[self.dim()], &[x.len()]));
        }
        Ok(self.log_pdf_unchecked(x))
    }

    pub(crate) fn log_pdf_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xi, &mu), &lv) in x.iter().zip(&self.mean).zip(&self.log_var) {
            let d = xi - mu;
            acc += LN_2PI + lv + d * d * (-lv).exp();
        }
        -0.5 * acc
    }

    pub fn pdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_pdf(x)?.exp())
    }

    /// `mean + exp(log_var / 2) * noise`; the reparameterized draw for a
    /// given standard-normal `noise`.
    pub fn sample_with_noise(&self, noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != self.dim() {
            return Err(Error::shape("DiagGaussian noise", &[self.dim()], &[noise.len()]));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_var)
            .zip(noise)
            .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
            .collect())
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let noise = rng.normals(self.dim());
        self.sample_with_noise(&noise).expect("noise has the right length")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_density() {
        let g = DiagGaussian::standard(1);
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((g.log_pdf(&[0.0]).unwrap() + half_ln_2pi).abs() < 1e-15);
        assert!((g.log_pdf(&[0.0]).unwrap() + 0.918_938_5).abs() < 1e-7);
        assert!((g.log_pdf(&[1.0]).unwrap() + half_ln_2pi + 0.5).abs() < 1e-15);
    }

    #[test]
    fn log_var_is_clamped() {
        let g = DiagGaussian::new(vec![0.0, 0.0], vec![-50.0, 50.0]).unwrap();
        assert_eq!(g.log_var(), &[LOG_VAR_MIN, LOG_VAR_MAX]);
    }

    #[test]
    fn zero_noise_returns_mean() {
        let g = DiagGaussian::new(vec![1.5, -2.0], vec![0.3, 2.0]).unwrap();
        assert_eq!(g.sample_with_noise(&[0.0, 0.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn floor_variance_sample_is_near_mean() {
        let g = DiagGaussian::new(vec![3.0], vec![f64::MIN]).unwrap();
        let mut rng = Rng::seed_from(5);
        for _ in 0..100 {
            assert!((g.sample(&mut rng)[0] - 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn dim_mismatch_rejected() {
        assert!(DiagGaussian::new(vec![0.0], vec![]).is_err());
        assert!(DiagGaussian::standard(2).log_pdf(&[0.0]).is_err());
    }

    #[test]
    fn maximized_at_mean() {
        let g = DiagGaussian::new(vec![0.5, -1.0], vec![0.2, -0.4]).unwrap();
        let at_mean = g.log_pdf(&[0.5, -1.0]).unwrap();
        let mut rng = Rng::seed_from(11);
        for _ in 0..200 {
            let x = [0.5 + rng.normal(), -1.0 + rng.normal()];
            assert!(g.log_pdf(&x).unwrap() <= at_mean);
        }
    }

    #[test]
    fn monte_carlo_moments() {
        // CLT: the sample mean of 1e5 draws has sd 0.0032, the sample variance sd 0.0045.
        let g = DiagGaussian::standard(1);
        let mut rng = Rng::seed_from(2024);
        let xs: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn density_integrates_to_one() {
        // Trapezoid rule on [-12, 12] in steps of 1e-3.
        let g = DiagGaussian::new(vec![0.7], vec![0.4]).unwrap();
        let h = 1e-3;
        let n = 24_000;
        let mut total = 0.0;
        for k in 0..=n {
            let x = -12.0 + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            total += w * g.pdf(&[x]).unwrap();
        }
        assert!((total * h - 1.0).abs() < 1e-6);
    }
}
