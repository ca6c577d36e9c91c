//! A single classifier between N(0,1) and N(1,1) learns the log density
//! ratio 0.5 - x.

use mmali::diffnet::{Activation, AdamConfig, MlpSpec, Tensor};
use mmali::training::fit_binary_logit;
use mmali::Rng;

fn main() -> mmali::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let mut rng = Rng::seed_from(0);
    let gaussian = |shift: f64| {
        move |n: usize, rng: &mut Rng| {
            let v = rng.normals(n).into_iter().map(|z| z + shift).collect();
            Tensor::matrix(n, 1, v).expect("column")
        }
    };
    let fit = fit_binary_logit(
        MlpSpec::new(vec![1, 32, 32, 1], Activation::LeakyRelu)?,
        AdamConfig::with_lr(1e-3),
        steps,
        128,
        gaussian(0.0),
        gaussian(1.0),
        &mut rng,
    )?;
    println!("final logistic loss {:.4}", fit.final_loss);
    let xs: Vec<f64> = (0..=10).map(|k| -2.0 + 0.5 * k as f64).collect();
    let logits = fit.logits(&Tensor::matrix(xs.len(), 1, xs.clone())?)?;
    for (x, t) in xs.iter().zip(logits.data()) {
        println!("x {x:+.1}  learned {t:+.3}  exact {:+.3}", 0.5 - x);
    }
    Ok(())
}
