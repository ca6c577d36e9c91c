//! Aggregating unimodal Gaussian posteriors: product, geometric mean and
//! mixture of experts.

use mmali::gaussians::{geometric_mean_of_experts, mixture_of_experts, moe_sample, product_of_experts, DiagGaussian};
use mmali::Rng;

fn main() -> mmali::Result<()> {
    let a = DiagGaussian::new(vec![0.0, 1.0], vec![0.0, -1.0])?;
    let b = DiagGaussian::new(vec![2.0, 0.0], vec![0.0, 0.5])?;
    let experts = [a, b];

    let poe = product_of_experts(&experts)?;
    let gm = geometric_mean_of_experts(&experts)?;
    println!("product:        mean {:?} var {:?}", poe.mean(), poe.variance());
    println!("geometric mean: mean {:?} var {:?}", gm.mean(), gm.variance());

    let moe = mixture_of_experts(&experts, None)?;
    let mut rng = Rng::seed_from(0);
    let draws: Vec<Vec<f64>> = (0..5).map(|_| moe_sample(&moe, &mut rng)).collect();
    println!("mixture draws:  {draws:.3?}");
    println!("mixture log density at the origin: {:.4}", moe.log_pdf(&[0.0, 0.0])?);
    Ok(())
}
