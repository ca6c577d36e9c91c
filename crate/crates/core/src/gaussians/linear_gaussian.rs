//! Exact densities for linear-Gaussian systems.
//!
//! A [`LinearGaussianNetwork`] is a directed acyclic chain of named vector
//! variables, each `x_v = Σ_p W_vp x_p + b_v + ε_v` with diagonal Gaussian
//! noise. Its log density can be evaluated two independent ways: by the chain
//! rule over the conditionals, or through the dense joint Gaussian obtained by
//! propagating means and covariances. Marginals over any subset of variables
//! come from the dense route.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::diag::LN_2PI;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Named assignment of values to variables.
pub type Point = BTreeMap<String, Vec<f64>>;

/// Anything with an exact log density over named variables.
pub trait LogDensity {
    fn log_density(&self, point: &Point) -> Result<f64>;
}

/// `log num(point) − log den(point)`.
pub fn analytic_log_ratio(numerator: &dyn LogDensity, denominator: &dyn LogDensity, point: &Point) -> Result<f64> {
    Ok(numerator.log_density(point)? - denominator.log_density(point)?)
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    dim: usize,
    parents: Vec<(usize, DMatrix<f64>)>,
    offset: DVector<f64>,
    log_var: DVector<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LinearGaussianNetwork {
    nodes: Vec<Node>,
}

/// Dense multivariate Gaussian over a list of named blocks.
#[derive(Debug, Clone)]
pub struct DenseGaussian {
    blocks: Vec<(String, usize)>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl LinearGaussianNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::invalid(format!("unknown variable {name}")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    pub fn dim_of(&self, name: &str) -> Result<usize> {
        Ok(self.nodes[self.index_of(name)?].dim)
    }

    /// Adds `name ~ N(Σ W_p parent_p + offset, diag(exp(log_var)))`. Parents
    /// must already exist; `W_p` has shape `[dim, dim(parent_p)]`.
    pub fn add(
        &mut self,
        name: &str,
        parents: Vec<(&str, DMatrix<f64>)>,
        offset: Vec<f64>,
        log_var: Vec<f64>,
    ) -> Result<()> {
        if self.index_of(name).is_ok() {
            return Err(Error::invalid(format!("variable {name} defined twice")));
        }
        let dim = offset.len();
        if log_var.len() != dim {
            return Err(Error::shape(format!("{name} log_var"), &[dim], &[log_var.len()]));
        }
        let mut resolved = Vec::with_capacity(parents.len());
        for (p, w) in parents {
            let pi = self.index_of(p)?;
            let pdim = self.nodes[pi].dim;
            if w.shape() != (dim, pdim) {
                return Err(Error::shape(
                    format!("{name} <- {p} weight"),
                    &[dim, pdim],
                    &[w.nrows(), w.ncols()],
                ));
            }
            resolved.push((pi, w));
        }
        self.nodes.push(Node {
            name: name.to_string(),
            dim,
            parents: resolved,
            offset: DVector::from_vec(offset),
            log_var: DVector::from_vec(log_var),
        });
        Ok(())
    }

    pub fn add_root(&mut self, name: &str, mean: Vec<f64>, log_var: Vec<f64>) -> Result<()> {
        self.add(name, vec![], mean, log_var)
    }

    fn conditional_mean(&self, node: &Node, point: &Point) -> Result<DVector<f64>> {
        let mut m = node.offset.clone();
        for (pi, w) in &node.parents {
            let p = &self.nodes[*pi];
            let x = lookup(point, &p.name, p.dim)?;
            m += w * DVector::from_column_slice(x);
        }
        Ok(m)
    }

    /// Chain-rule log density of the full assignment.
    pub fn chain_log_density(&self, point: &Point) -> Result<f64> {
        let mut total = 0.0;
        for node in &self.nodes {
            let x = lookup(point, &node.name, node.dim)?;
            let mean = self.conditional_mean(node, point)?;
            for d in 0..node.dim {
                let lv = node.log_var[d];
                let r = x[d] - mean[d];
                total += -0.5 * (LN_2PI + lv + r * r * (-lv).exp());
            }
        }
        Ok(total)
    }

    /// Ancestral sample of every variable.
    pub fn sample(&self, rng: &mut Rng) -> Point {
        let mut point = Point::new();
        for node in &self.nodes {
            let mean = self
                .conditional_mean(node, &point)
                .expect("parents are sampled first");
            let x: Vec<f64> = (0..node.dim)
                .map(|d| mean[d] + (0.5 * node.log_var[d]).exp() * rng.normal())
                .collect();
            point.insert(node.name.clone(), x);
        }
        point
    }

    /// Dense joint Gaussian over all variables, in definition order.
    pub fn joint(&self) -> DenseGaussian {
        let offsets: Vec<usize> = self
            .nodes
            .iter()
            .scan(0, |acc, n| {
                let o = *acc;
                *acc += n.dim;
                Some(o)
            })
            .collect();
        let total: usize = self.nodes.iter().map(|n| n.dim).sum();
        // x = B x + b + e  =>  x = T (b + e) with T = (I - B)^{-1}.
        let mut b_mat = DMatrix::zeros(total, total);
        let mut b_vec = DVector::zeros(total);
        let mut noise = DVector::zeros(total);
        for (k, node) in self.nodes.iter().enumerate() {
            let o = offsets[k];
            b_vec.rows_mut(o, node.dim).copy_from(&node.offset);
            for d in 0..node.dim {
                noise[o + d] = node.log_var[d].exp();
            }
            for (pi, w) in &node.parents {
                b_mat
                    .view_mut((o, offsets[*pi]), (node.dim, self.nodes[*pi].dim))
                    .copy_from(w);
            }
        }
        // I - B is unit lower block-triangular, so forward substitution is exact.
        let i_minus_b = DMatrix::identity(total, total) - b_mat;
        let t = i_minus_b
            .solve_lower_triangular(&DMatrix::identity(total, total))
            .expect("unit triangular system is nonsingular");
        let mean = &t * b_vec;
        let cov = &t * DMatrix::from_diagonal(&noise) * t.transpose();
        DenseGaussian {
            blocks: self.nodes.iter().map(|n| (n.name.clone(), n.dim)).collect(),
            mean,
            cov,
        }
    }

    /// Marginal over the named variables (in the given order).
    pub fn marginal(&self, vars: &[&str]) -> Result<DenseGaussian> {
        self.joint().select(vars)
    }
}

impl LogDensity for LinearGaussianNetwork {
    fn log_density(&self, point: &Point) -> Result<f64> {
        self.chain_log_density(point)
    }
}

fn lookup<'p>(point: &'p Point, name: &str, dim: usize) -> Result<&'p [f64]> {
    let x = point
        .get(name)
        .ok_or_else(|| Error::invalid(format!("point has no value for {name}")))?;
    if x.len() != dim {
        return Err(Error::shape(format!("point value {name}"), &[dim], &[x.len()]));
    }
    Ok(x)
}

impl DenseGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn blocks(&self) -> &[(String, usize)] {
        &self.blocks
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn block_offsets(&self) -> BTreeMap<&str, (usize, usize)> {
        let mut out = BTreeMap::new();
        let mut o = 0;
        for (n, d) in &self.blocks {
            out.insert(n.as_str(), (o, *d));
            o += d;
        }
        out
    }

    pub fn select(&self, vars: &[&str]) -> Result<DenseGaussian> {
        let offsets = self.block_offsets();
        let mut idx = Vec::new();
        let mut blocks = Vec::new();
        for v in vars {
            let &(o, d) = offsets
                .get(v)
                .ok_or_else(|| Error::invalid(format!("unknown variable {v}")))?;
            idx.extend(o..o + d);
            blocks.push((v.to_string(), d));
        }
        let n = idx.len();
        let mean = DVector::from_fn(n, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(n, n, |i, j| self.cov[(idx[i], idx[j])]);
        Ok(DenseGaussian { blocks, mean, cov })
    }

    pub fn log_pdf_vec(&self, x: &DVector<f64>) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::shape("DenseGaussian point", &[n], &[x.len()]));
        }
        if n == 0 {
            return Ok(0.0);
        }
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let r = x - &self.mean;
        let z = chol
            .l()
            .solve_lower_triangular(&r)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(-0.5 * (n as f64 * LN_2PI + log_det + z.dot(&z)))
    }
}

impl LogDensity for DenseGaussian {
    fn log_density(&self, point: &Point) -> Result<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for (n, d) in &self.blocks {
            x.extend_from_slice(lookup(point, n, *d)?);
        }
        self.log_pdf_vec(&DVector::from_vec(x))
    }
}

/// Product of independent densities over disjoint variables.
pub struct ProductDensity<'a>(pub Vec<&'a dyn LogDensity>);

impl LogDensity for ProductDensity<'_> {
    fn log_density(&self, point: &Point) -> Result<f64> {
        self.0.iter().map(|d| d.log_density(point)).sum()
    }
}
