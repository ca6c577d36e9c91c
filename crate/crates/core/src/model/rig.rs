//! A fully linear-Gaussian multimodal system in which every density, and so
//! every ratio a discriminator is meant to learn, is known in closed form.
//!
//! Data: `x_0 ~ N`, `x_k | x_0` linear for `k > 0`. Encoders: `c | x_i` and
//! `s_j | x_j` linear. Decoders: `c, s_j ~ N(0, I)`, `x_j | s_j, c` linear.

use nalgebra::DMatrix;

use super::ratios::FactorLogits;
use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::gaussians::{DenseGaussian, LinearGaussianNetwork, LogDensity, Point};
use crate::rng::Rng;

/// `y = W x + offset + N(0, diag(exp(log_var)))`.
#[derive(Debug, Clone)]
struct LinearMap {
    weight: DMatrix<f64>,
    offset: Vec<f64>,
    log_var: Vec<f64>,
}

impl LinearMap {
    fn random(out: usize, input: usize, scale: f64, rng: &mut Rng) -> Self {
        LinearMap {
            weight: DMatrix::from_fn(out, input, |_, _| scale * rng.normal()),
            offset: (0..out).map(|_| 0.2 * rng.normal()).collect(),
            log_var: (0..out).map(|_| rng.uniform_in(-0.2, 0.1)).collect(),
        }
    }

    fn columns(&self, start: usize, width: usize) -> DMatrix<f64> {
        self.weight.columns(start, width).into_owned()
    }
}

pub fn x_name(i: usize) -> String {
    format!("x{i}")
}

pub fn s_name(i: usize) -> String {
    format!("s{i}")
}

pub const CONTENT: &str = "c";

#[derive(Debug, Clone)]
pub struct LinearGaussianRig {
    modality_dims: Vec<usize>,
    content_dim: usize,
    style_dim: usize,
    encoder_networks: Vec<LinearGaussianNetwork>,
    decoder_network: LinearGaussianNetwork,
    densities: Densities,
}

/// Dense joints and every marginal the factors need.
#[derive(Debug, Clone)]
struct Densities {
    encoder_joints: Vec<DenseGaussian>,
    decoder_joint: DenseGaussian,
    data_joint: DenseGaussian,
    data_marginals: Vec<DenseGaussian>,
    /// `q_j(x_j, s_j, c)` and `q_j(x_j, s_j)`.
    q_xsc: Vec<DenseGaussian>,
    q_xs: Vec<DenseGaussian>,
    p_c: DenseGaussian,
    p_xsc: Vec<DenseGaussian>,
}

impl LinearGaussianRig {
    /// Random well-conditioned system; weights are drawn with scale 0.35.
    pub fn random(modality_dims: Vec<usize>, content_dim: usize, style_dim: usize, rng: &mut Rng) -> Result<Self> {
        if modality_dims.is_empty() || modality_dims.contains(&0) {
            return Err(Error::invalid(format!("bad modality dims {modality_dims:?}")));
        }
        let scale = 0.25;
        let n0 = modality_dims[0];
        let data: Vec<LinearMap> = modality_dims
            .iter()
            .enumerate()
            .map(|(k, &n)| LinearMap::random(n, if k == 0 { 0 } else { n0 }, scale, rng))
            .collect();
        let content_encoders: Vec<LinearMap> = modality_dims
            .iter()
            .map(|&n| LinearMap::random(content_dim, n, scale, rng))
            .collect();
        let style_encoders: Vec<LinearMap> = modality_dims
            .iter()
            .map(|&n| LinearMap::random(style_dim, n, scale, rng))
            .collect();
        let decoders: Vec<LinearMap> = modality_dims
            .iter()
            .map(|&n| LinearMap::random(n, style_dim + content_dim, scale, rng))
            .collect();
        Self::assemble(
            modality_dims,
            content_dim,
            style_dim,
            &data,
            &content_encoders,
            &style_encoders,
            &decoders,
        )
    }

    /// The two-modality scalar system with `x_1 = x_0 + noise`, used by the
    /// ratio-learning demos: every code and observation is one-dimensional.
    pub fn scalar_pair(rng: &mut Rng) -> Result<Self> {
        Self::random(vec![1, 1], 1, 1, rng)
    }

    fn assemble(
        modality_dims: Vec<usize>,
        content_dim: usize,
        style_dim: usize,
        data: &[LinearMap],
        content_encoders: &[LinearMap],
        style_encoders: &[LinearMap],
        decoders: &[LinearMap],
    ) -> Result<Self> {
        let m = modality_dims.len();
        let add_data = |net: &mut LinearGaussianNetwork| -> Result<()> {
            for (k, map) in data.iter().enumerate() {
                let parents = if k == 0 { vec![] } else { vec![("x0", map.weight.clone())] };
                net.add(&x_name(k), parents, map.offset.clone(), map.log_var.clone())?;
            }
            Ok(())
        };
        let mut encoder_networks = Vec::with_capacity(m);
        for i in 0..m {
            let mut net = LinearGaussianNetwork::new();
            add_data(&mut net)?;
            for (j, map) in style_encoders.iter().enumerate() {
                let xj = x_name(j);
                net.add(&s_name(j), vec![(&xj, map.weight.clone())], map.offset.clone(), map.log_var.clone())?;
            }
            let map = &content_encoders[i];
            let xi = x_name(i);
            net.add(CONTENT, vec![(&xi, map.weight.clone())], map.offset.clone(), map.log_var.clone())?;
            encoder_networks.push(net);
        }

        let mut decoder_network = LinearGaussianNetwork::new();
        decoder_network.add_root(CONTENT, vec![0.0; content_dim], vec![0.0; content_dim])?;
        for j in 0..m {
            decoder_network.add_root(&s_name(j), vec![0.0; style_dim], vec![0.0; style_dim])?;
        }
        for (j, map) in decoders.iter().enumerate() {
            let sj = s_name(j);
            decoder_network.add(
                &x_name(j),
                vec![(&sj, map.columns(0, style_dim)), (CONTENT, map.columns(style_dim, content_dim))],
                map.offset.clone(),
                map.log_var.clone(),
            )?;
        }

        let encoder_joints: Vec<DenseGaussian> = encoder_networks.iter().map(|n| n.joint()).collect();
        let decoder_joint = decoder_network.joint();
        let x_names: Vec<String> = (0..m).map(x_name).collect();
        let x_refs: Vec<&str> = x_names.iter().map(String::as_str).collect();
        let data_joint = encoder_joints[0].select(&x_refs)?;
        let mut data_marginals = Vec::with_capacity(m);
        let mut q_xsc = Vec::with_capacity(m);
        let mut q_xs = Vec::with_capacity(m);
        let mut p_xsc = Vec::with_capacity(m);
        for j in 0..m {
            let (xj, sj) = (x_name(j), s_name(j));
            data_marginals.push(data_joint.select(&[&xj])?);
            q_xsc.push(encoder_joints[j].select(&[&xj, &sj, CONTENT])?);
            q_xs.push(encoder_joints[j].select(&[&xj, &sj])?);
            p_xsc.push(decoder_joint.select(&[&xj, &sj, CONTENT])?);
        }
        let p_c = decoder_joint.select(&[CONTENT])?;
        let densities = Densities {
            encoder_joints,
            decoder_joint,
            data_joint,
            data_marginals,
            q_xsc,
            q_xs,
            p_c,
            p_xsc,
        };
        Ok(LinearGaussianRig {
            modality_dims,
            content_dim,
            style_dim,
            encoder_networks,
            decoder_network,
            densities,
        })
    }

    pub fn modalities(&self) -> usize {
        self.modality_dims.len()
    }

    pub fn modality_dims(&self) -> &[usize] {
        &self.modality_dims
    }

    pub fn content_dim(&self) -> usize {
        self.content_dim
    }

    pub fn style_dim(&self) -> usize {
        self.style_dim
    }

    /// `q_i(X, S, c)` as a chain of conditionals.
    pub fn encoder_network(&self, i: usize) -> &LinearGaussianNetwork {
        &self.encoder_networks[i]
    }

    /// `p(X, S, c)` as a chain of conditionals.
    pub fn decoder_network(&self) -> &LinearGaussianNetwork {
        &self.decoder_network
    }

    pub fn sample_encoder(&self, i: usize, rng: &mut Rng) -> Point {
        self.encoder_networks[i].sample(rng)
    }

    pub fn sample_decoder(&self, rng: &mut Rng) -> Point {
        self.decoder_network.sample(rng)
    }

    /// Data tuple `X ~ q(X)` only.
    pub fn sample_data(&self, rng: &mut Rng) -> Vec<Vec<f64>> {
        let point = self.sample_encoder(0, rng);
        (0..self.modalities()).map(|k| point[&x_name(k)].clone()).collect()
    }

    /// `log q_i(X, S, c) − log p(X, S, c)` through the dense joints.
    pub fn joint_log_ratio(&self, i: usize, point: &Point) -> Result<f64> {
        let d = &self.densities;
        let q = d
            .encoder_joints
            .get(i)
            .ok_or_else(|| Error::invalid(format!("modality {i} out of range")))?;
        Ok(q.log_density(point)? - d.decoder_joint.log_density(point)?)
    }

    /// Exact factor log-ratios at `point`, each from its own marginals.
    pub fn factor_logits(&self, point: &Point) -> Result<FactorLogits> {
        let d = &self.densities;
        let mut c = d.data_joint.log_density(point)?;
        for q in &d.data_marginals {
            c -= q.log_density(point)?;
        }
        let log_pc = d.p_c.log_density(point)?;
        let mut a = Vec::with_capacity(self.modalities());
        let mut b = Vec::with_capacity(self.modalities());
        for j in 0..self.modalities() {
            let q_xsc = d.q_xsc[j].log_density(point)?;
            a.push(q_xsc - d.q_xs[j].log_density(point)? - log_pc);
            b.push(q_xsc - d.p_xsc[j].log_density(point)?);
        }
        Ok(FactorLogits { c, a, b })
    }

    /// Log density of a named factor's two sides, for checking learned
    /// factor discriminators: returns `(numerator, denominator)` densities.
    pub fn factor_sides(&self, factor: Factor) -> Result<(Vec<&DenseGaussian>, Vec<&DenseGaussian>)> {
        let d = &self.densities;
        let m = self.modalities();
        match factor {
            Factor::C => Ok((vec![&d.data_joint], d.data_marginals.iter().collect())),
            Factor::A(j) if j < m => Ok((vec![&d.q_xsc[j]], vec![&d.q_xs[j], &d.p_c])),
            Factor::B(j) if j < m => Ok((vec![&d.q_xsc[j]], vec![&d.p_xsc[j]])),
            _ => Err(Error::invalid(format!("factor {factor:?} out of range"))),
        }
    }

    /// One draw from each side of a factor: `C` contrasts the data joint with
    /// independently drawn modalities, `A_j` swaps in a prior content code,
    /// `B_j` contrasts the encoder and decoder systems.
    pub fn sample_factor_pair(&self, factor: Factor, rng: &mut Rng) -> Result<(Point, Point)> {
        let m = self.modalities();
        match factor {
            Factor::C => {
                let pos = self.sample_encoder(0, rng);
                let mut neg = pos.clone();
                for k in 0..m {
                    let other = self.sample_encoder(0, rng);
                    neg.insert(x_name(k), other[&x_name(k)].clone());
                }
                Ok((pos, neg))
            }
            Factor::A(j) if j < m => {
                let pos = self.sample_encoder(j, rng);
                let mut neg = self.sample_encoder(j, rng);
                let prior = self.sample_decoder(rng);
                neg.insert(CONTENT.to_string(), prior[CONTENT].clone());
                Ok((pos, neg))
            }
            Factor::B(j) if j < m => Ok((self.sample_encoder(j, rng), self.sample_decoder(rng))),
            _ => Err(Error::invalid(format!("factor {factor:?} out of range"))),
        }
    }

    /// Converts points to the batched `(X, S, c)` tensors a model consumes.
    pub fn to_tensors(&self, points: &[Point]) -> Result<(Vec<Tensor>, Vec<Tensor>, Tensor)> {
        let rows = points.len();
        let gather = |name: &str, dim: usize| -> Result<Tensor> {
            let mut data = Vec::with_capacity(rows * dim);
            for p in points {
                let v = p
                    .get(name)
                    .ok_or_else(|| Error::invalid(format!("point has no value for {name}")))?;
                if v.len() != dim {
                    return Err(Error::shape(format!("point value {name}"), &[dim], &[v.len()]));
                }
                data.extend_from_slice(v);
            }
            Tensor::new(vec![rows, dim], data)
        };
        let xs = (0..self.modalities())
            .map(|j| gather(&x_name(j), self.modality_dims[j]))
            .collect::<Result<Vec<_>>>()?;
        let ss = (0..self.modalities())
            .map(|j| gather(&s_name(j), self.style_dim))
            .collect::<Result<Vec<_>>>()?;
        Ok((xs, ss, gather(CONTENT, self.content_dim)?))
    }
}

/// One of the factor discriminators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    C,
    A(usize),
    B(usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_log_ratios;

    #[test]
    fn chain_and_dense_routes_agree() {
        let rig = LinearGaussianRig::random(vec![2, 3], 2, 1, &mut Rng::seed_from(4)).unwrap();
        let mut rng = Rng::seed_from(5);
        for i in 0..2 {
            let point = rig.sample_encoder(i, &mut rng);
            let chain = rig.encoder_network(i).chain_log_density(&point).unwrap()
                - rig.decoder_network().chain_log_density(&point).unwrap();
            let dense = rig.joint_log_ratio(i, &point).unwrap();
            assert!((chain - dense).abs() < 1e-9, "{chain} vs {dense}");
        }
    }

    #[test]
    fn assembled_factors_match_joint_ratio() {
        let rig = LinearGaussianRig::random(vec![2, 2], 2, 1, &mut Rng::seed_from(10)).unwrap();
        let mut rng = Rng::seed_from(11);
        let mut big: f64 = 0.0;
        for k in 0..2000 {
            let point = if k % 3 == 2 { rig.sample_decoder(&mut rng) } else { rig.sample_encoder(k % 3, &mut rng) };
            let f = rig.factor_logits(&point).unwrap();
            big = big.max(f.c.abs()).max(f.a.iter().chain(&f.b).fold(0.0, |m: f64, v| m.max(v.abs())));
            let assembled = assemble_log_ratios(&f);
            for (i, lr) in assembled.iter().enumerate() {
                let joint = rig.joint_log_ratio(i, &point).unwrap();
                assert!((lr - joint).abs() < 1e-9, "modality {i}: {lr} vs {joint}");
            }
        }
        // Nothing was clamped, so the comparison is exact algebra.
        assert!(big < crate::model::LOGIT_CLAMP, "{big}");
    }

    #[test]
    fn zero_style_width_is_supported() {
        let rig = LinearGaussianRig::random(vec![1, 2], 1, 0, &mut Rng::seed_from(2)).unwrap();
        let point = rig.sample_encoder(1, &mut Rng::seed_from(3));
        assert_eq!(point["s0"].len(), 0);
        let f = rig.factor_logits(&point).unwrap();
        let lr = assemble_log_ratios(&f);
        assert!((lr[1] - rig.joint_log_ratio(1, &point).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tensors_follow_point_order() {
        let rig = LinearGaussianRig::scalar_pair(&mut Rng::seed_from(0)).unwrap();
        let mut rng = Rng::seed_from(1);
        let pts: Vec<Point> = (0..3).map(|_| rig.sample_decoder(&mut rng)).collect();
        let (xs, ss, c) = rig.to_tensors(&pts).unwrap();
        assert_eq!(xs[1].get(2, 0), pts[2]["x1"][0]);
        assert_eq!(ss[0].get(0, 0), pts[0]["s0"][0]);
        assert_eq!(c.get(1, 0), pts[1]["c"][0]);
    }
}
