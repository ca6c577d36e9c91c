//! Gaussian-ring data: K clusters on the unit circle, seen by every modality
//! through its own invertible affine map.

use std::f64::consts::PI;

use super::io::{DatasetManifest, GeneratorKind};
use super::MultimodalBatch;
use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// `y = M x + b` on the plane; `matrix` is row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub matrix: [f64; 4],
    pub offset: [f64; 2],
}

impl Affine2 {
    pub fn identity() -> Self {
        Affine2 {
            matrix: [1.0, 0.0, 0.0, 1.0],
            offset: [0.0, 0.0],
        }
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Affine2 {
            matrix: [c, -s, s, c],
            offset: [0.0, 0.0],
        }
    }

    /// Quarter turns are built from exact entries so round trips stay exact.
    pub fn quarter_turns(k: usize) -> Self {
        let matrix = match k % 4 {
            0 => [1.0, 0.0, 0.0, 1.0],
            1 => [0.0, -1.0, 1.0, 0.0],
            2 => [-1.0, 0.0, 0.0, -1.0],
            _ => [0.0, 1.0, -1.0, 0.0],
        };
        Affine2 {
            matrix,
            offset: [0.0, 0.0],
        }
    }

    pub fn determinant(&self) -> f64 {
        let m = self.matrix;
        m[0] * m[3] - m[1] * m[2]
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = self.matrix;
        [
            m[0] * p[0] + m[1] * p[1] + self.offset[0],
            m[2] * p[0] + m[3] * p[1] + self.offset[1],
        ]
    }

    /// Six comma-free numbers separated by spaces: `m00 m01 m10 m11 b0 b1`.
    pub fn encode(&self) -> String {
        let v = [self.matrix[0], self.matrix[1], self.matrix[2], self.matrix[3], self.offset[0], self.offset[1]];
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn decode(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|p| p.parse::<f64>().map_err(|e| Error::invalid(format!("bad transform entry {p}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 6 {
            return Err(Error::invalid(format!("transform needs 6 numbers, got {}", v.len())));
        }
        Ok(Affine2 {
            matrix: [v[0], v[1], v[2], v[3]],
            offset: [v[4], v[5]],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingConfig {
    pub components: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub cluster_sigma: f64,
    pub noise_sigma: f64,
    /// One map per modality.
    pub transforms: Vec<Affine2>,
    /// Every modality observes the same base draw instead of its own
    /// same-label instance.
    pub shared_instance: bool,
    pub seed: u64,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self::with_modalities(2)
    }
}

impl RingConfig {
    /// K = 8, 10,000 train and 2,000 test rows; modality `i` is rotated by
    /// `i` quarter turns.
    pub fn with_modalities(m: usize) -> Self {
        RingConfig {
            components: 8,
            train_rows: 10_000,
            test_rows: 2_000,
            cluster_sigma: 0.1,
            noise_sigma: 0.05,
            transforms: (0..m).map(Affine2::quarter_turns).collect(),
            shared_instance: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components < 2 {
            return Err(Error::invalid(format!(
                "gaussian ring needs at least 2 components, got {}",
                self.components
            )));
        }
        if self.transforms.is_empty() {
            return Err(Error::invalid("gaussian ring needs at least one modality"));
        }
        for (i, t) in self.transforms.iter().enumerate() {
            if t.matrix.iter().chain(&t.offset).any(|v| !v.is_finite()) || t.determinant().abs() < 1e-12 {
                return Err(Error::invalid(format!("transform {i} is not invertible")));
            }
        }
        if !(self.cluster_sigma >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise scales must be nonnegative"));
        }
        Ok(())
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let angle = 2.0 * PI * k as f64 / self.components as f64;
        [angle.cos(), angle.sin()]
    }

    pub fn classifier(&self) -> RingClassifier {
        RingClassifier {
            centers: self
                .transforms
                .iter()
                .map(|t| (0..self.components).map(|k| t.apply(self.center(k))).collect())
                .collect(),
        }
    }

    fn split(&self, rows: usize, rng: &mut Rng) -> Result<MultimodalBatch> {
        let m = self.transforms.len();
        let mut x: Vec<Vec<f64>> = vec![Vec::with_capacity(rows * 2); m];
        let mut labels = vec![Vec::with_capacity(rows); m];
        for _ in 0..rows {
            let k = rng.below(self.components);
            let center = self.center(k);
            let mut base = [0.0; 2];
            for i in 0..m {
                if i == 0 || !self.shared_instance {
                    base = [
                        center[0] + self.cluster_sigma * rng.normal(),
                        center[1] + self.cluster_sigma * rng.normal(),
                    ];
                }
                let y = self.transforms[i].apply(base);
                x[i].push(y[0] + self.noise_sigma * rng.normal());
                x[i].push(y[1] + self.noise_sigma * rng.normal());
                labels[i].push(k);
            }
        }
        let x = x
            .into_iter()
            .map(|d| Tensor::matrix(rows, 2, d))
            .collect::<Result<Vec<_>>>()?;
        MultimodalBatch::new(x, Some(labels), vec![true; rows])
    }
}

/// A generated dataset: manifest plus fully paired train and test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: MultimodalBatch,
    pub test: MultimodalBatch,
}

pub fn generate_gaussian_ring(config: &RingConfig) -> Result<Dataset> {
    config.validate()?;
    let mut train_rng = Rng::stream(config.seed, 1);
    let mut test_rng = Rng::stream(config.seed, 2);
    let train = config.split(config.train_rows, &mut train_rng)?;
    let test = config.split(config.test_rows, &mut test_rng)?;
    let manifest = DatasetManifest {
        name: format!("gaussian-ring-k{}-m{}", config.components, config.transforms.len()),
        modality_dims: vec![2; config.transforms.len()],
        components: config.components,
        generator: GeneratorKind::GaussianRing(config.clone()),
        seed: config.seed,
        train_rows: config.train_rows,
        test_rows: config.test_rows,
    };
    Ok(Dataset { manifest, train, test })
}

/// Nearest transformed center, per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct RingClassifier {
    centers: Vec<Vec<[f64; 2]>>,
}

impl RingClassifier {
    pub fn modalities(&self) -> usize {
        self.centers.len()
    }

    pub fn components(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn classify_point(&self, modality: usize, p: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, c) in self.centers[modality].iter().enumerate() {
            let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    pub fn classify(&self, modality: usize, x: &Tensor) -> Result<Vec<usize>> {
        if modality >= self.modalities() {
            return Err(Error::invalid(format!("no classifier for modality {modality}")));
        }
        x.ensure_matrix(&format!("classifier {modality} input"), 2)?;
        Ok((0..x.rows()).map(|r| self.classify_point(modality, x.row(r))).collect())
    }
}
