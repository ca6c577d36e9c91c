//! Assembly of per-modality density ratios from factor discriminator logits.
//!
//! With content code `c` and style codes `s_j`, the ratio between encoder
//! distribution `q_i(X, S, c)` and the decoder distribution `p(X, S, c)`
//! factorizes into three kinds of binary ratios:
//!
//! * `C(X)      ≈ log q(X) / ∏_k q(x_k)`
//! * `A_j(x_j, s_j, c) ≈ log q(x_j, s_j, c) / (q(x_j, s_j) p(c))`
//! * `B_j(x_j, s_j, c) ≈ log q(x_j, s_j, c) / p(x_j, s_j, c)`
//!
//! and `log r_i = C + A_i + Σ_j (B_j − A_j)`.

use crate::gaussians::log_sum_exp;

/// Every logit is clamped into `[-LOGIT_CLAMP, LOGIT_CLAMP]` before assembly.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Factor logits for one `(X, S, c)` tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLogits {
    pub c: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FactorLogits {
    pub fn zeros(modalities: usize) -> Self {
        FactorLogits {
            c: 0.0,
            a: vec![0.0; modalities],
            b: vec![0.0; modalities],
        }
    }

    pub fn modalities(&self) -> usize {
        self.a.len()
    }
}

#[inline]
pub fn clamp_logit(t: f64) -> f64 {
    t.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// `log r_i` for every modality `i`.
pub fn assemble_log_ratios(f: &FactorLogits) -> Vec<f64> {
    let shared: f64 = clamp_logit(f.c)
        + f.a
            .iter()
            .zip(&f.b)
            .map(|(&a, &b)| clamp_logit(b) - clamp_logit(a))
            .sum::<f64>();
    f.a.iter().map(|&a| shared + clamp_logit(a)).collect()
}

/// The `(M + 1)`-way optimal discriminator `[r_1, …, r_M, 1] / (1 + Σ r_j)`,
/// computed in the log domain.
pub fn assemble_optimal_discriminator(log_ratios: &[f64]) -> Vec<f64> {
    log_optimal_discriminator(log_ratios)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Logarithm of [`assemble_optimal_discriminator`].
pub fn log_optimal_discriminator(log_ratios: &[f64]) -> Vec<f64> {
    let mut terms = log_ratios.to_vec();
    terms.push(0.0);
    let lse = log_sum_exp(&terms);
    terms.iter().map(|t| t - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_give_unit_ratios() {
        assert_eq!(assemble_log_ratios(&FactorLogits::zeros(3)), vec![0.0; 3]);
    }

    #[test]
    fn single_modality_cancels_a() {
        let f = FactorLogits {
            c: 0.4,
            a: vec![7.5],
            b: vec![-1.25],
        };
        let lr = assemble_log_ratios(&f);
        assert!((lr[0] - (0.4 - 1.25)).abs() < 1e-14);
    }

    #[test]
    fn logits_are_clamped() {
        let f = FactorLogits {
            c: 100.0,
            a: vec![0.0],
            b: vec![-100.0],
        };
        assert_eq!(assemble_log_ratios(&f), vec![0.0]);
    }

    #[test]
    fn uniform_discriminator_for_unit_ratios() {
        let d = assemble_optimal_discriminator(&[0.0, 0.0]);
        for p in d {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_ratio_takes_all_mass() {
        let d = assemble_optimal_discriminator(&[0.0, 700.0, -3.0]);
        assert!((d[1] - 1.0).abs() < 1e-15);
        assert!(d[0] < 1e-300 && d[2] < 1e-300 && d[3] < 1e-300);
    }
}
