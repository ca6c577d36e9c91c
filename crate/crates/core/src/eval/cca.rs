use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffnet::Tensor;
use crate::error::{Error, Result};

pub const CCA_REGULARIZATION: f64 = 1e-6;

/// Canonical projections fitted on paired training features.
#[derive(Debug, Clone)]
pub struct Cca {
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    /// Train averages of the projected features.
    avg1: DVector<f64>,
    avg2: DVector<f64>,
    pub correlations: Vec<f64>,
}

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn centered(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

/// `C^{-1/2}` of a symmetric positive-definite matrix.
fn inverse_sqrt(c: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(c);
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) || !(max > 0.0) {
        return Err(Error::Numerical(format!("{what} covariance is singular beyond regularization")));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

impl Cca {
    /// Fits `k` canonical directions via the SVD of the whitened
    /// cross-covariance, with `reg · I` added to both covariances.
    pub fn fit(x1: &Tensor, x2: &Tensor, k: usize, reg: f64) -> Result<Self> {
        let n = x1.rows();
        if x2.rows() != n {
            return Err(Error::shape("CCA paired rows", &[n], &[x2.rows()]));
        }
        let (d1, d2) = (x1.cols(), x2.cols());
        if k == 0 || k > d1.min(d2) {
            return Err(Error::invalid(format!("CCA needs 1 <= k <= {}, got {k}", d1.min(d2))));
        }
        if n < d1.max(d2) || n < 2 {
            return Err(Error::invalid(format!("CCA needs at least {} rows, got {n}", d1.max(d2).max(2))));
        }
        let (a, _) = centered(&to_matrix(x1));
        let (b, _) = centered(&to_matrix(x2));
        let scale = 1.0 / (n - 1) as f64;
        let c11 = a.transpose() * &a * scale + DMatrix::identity(d1, d1) * reg;
        let c22 = b.transpose() * &b * scale + DMatrix::identity(d2, d2) * reg;
        let c12 = a.transpose() * &b * scale;
        let r1 = inverse_sqrt(c11, "first view")?;
        let r2 = inverse_sqrt(c22, "second view")?;
        let t = &r1 * c12 * &r2;
        let svd = t.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&p, &q| svd.singular_values[q].total_cmp(&svd.singular_values[p]));
        let order = &order[..k];
        let u_k = DMatrix::from_columns(&order.iter().map(|&j| u.column(j).into_owned()).collect::<Vec<_>>());
        let v_k = DMatrix::from_columns(&order.iter().map(|&j| vt.row(j).transpose()).collect::<Vec<_>>());
        let w1 = r1 * u_k;
        let w2 = r2 * v_k;
        let avg1 = (to_matrix(x1) * &w1).row_mean().transpose();
        let avg2 = (to_matrix(x2) * &w2).row_mean().transpose();
        Ok(Cca {
            w1,
            w2,
            avg1,
            avg2,
            correlations: order.iter().map(|&j| svd.singular_values[j]).collect(),
        })
    }

    /// Cosine between `W_1ᵀx̃_1 − avg(W_1ᵀx_1)` and `W_2ᵀx̃_2 − avg(W_2ᵀx_2)`
    /// for every eval pair.
    pub fn scores(&self, x1: &Tensor, x2: &Tensor) -> Result<Vec<f64>> {
        if x1.rows() != x2.rows() {
            return Err(Error::shape("CCA eval rows", &[x1.rows()], &[x2.rows()]));
        }
        x1.ensure_matrix("CCA eval first view", self.w1.nrows())?;
        x2.ensure_matrix("CCA eval second view", self.w2.nrows())?;
        let p1 = to_matrix(x1) * &self.w1;
        let p2 = to_matrix(x2) * &self.w2;
        Ok((0..x1.rows())
            .map(|r| {
                let a = p1.row(r).transpose() - &self.avg1;
                let b = p2.row(r).transpose() - &self.avg2;
                let denom = a.norm() * b.norm();
                if denom > 0.0 {
                    a.dot(&b) / denom
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Mean correlation score of `eval` pairs under a CCA fitted on `train` pairs.
pub fn cca_correlation(
    train: (&Tensor, &Tensor),
    eval: (&Tensor, &Tensor),
    k: usize,
) -> Result<f64> {
    let cca = Cca::fit(train.0, train.1, k, CCA_REGULARIZATION)?;
    let s = cca.scores(eval.0, eval.1)?;
    if s.is_empty() {
        return Err(Error::invalid("CCA score of an empty eval set"));
    }
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// `min(8, d1, d2)`.
pub fn default_components(d1: usize, d2: usize) -> usize {
    8.min(d1).min(d2)
}
