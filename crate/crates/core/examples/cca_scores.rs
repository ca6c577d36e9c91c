//! CCA scores: near one for linearly related views, near zero for
//! independent ones.

use mmali::diffnet::Tensor;
use mmali::eval::cca_correlation;
use mmali::Rng;

fn main() -> mmali::Result<()> {
    let mut rng = Rng::seed_from(3);
    let n = 5000;
    let a = Tensor::matrix(n, 3, rng.normals(3 * n))?;
    let mixed: Vec<f64> = a.data().chunks(3).flat_map(|r| [r[0] + 0.5 * r[2], r[1] - r[0]]).collect();
    let b = Tensor::matrix(n, 2, mixed)?;
    let c = Tensor::matrix(n, 2, rng.normals(2 * n))?;
    println!("related views:     {:.6}", cca_correlation((&a, &b), (&a, &b), 2)?);
    println!("independent views: {:.6}", cca_correlation((&a, &c), (&a, &c), 2)?);
    Ok(())
}
