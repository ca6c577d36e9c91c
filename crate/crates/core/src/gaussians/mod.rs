//! Diagonal-Gaussian algebra: densities, reparameterized sampling, expert
//! aggregation, and exact linear-Gaussian densities used as ratio oracles.

mod diag;
mod experts;
pub mod linear_gaussian;

pub use diag::{DiagGaussian, LOG_VAR_MAX, LOG_VAR_MIN};
pub use experts::{
    geometric_mean_of_experts, log_sum_exp, mixture_of_experts, moe_sample, product_of_experts,
    GaussianMixture, MeanFunction,
};
pub use linear_gaussian::{
    analytic_log_ratio, DenseGaussian, LinearGaussianNetwork, LogDensity, Point, ProductDensity,
};
