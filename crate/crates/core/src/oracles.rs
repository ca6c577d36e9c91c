//! Self-checks behind `mmali oracle-check`: backprop against finite
//! differences, closed-form Gaussian aggregation against grid normalization,
//! and the factorized ratio identity on a linear-Gaussian rig.

use serde::Serialize;

use crate::data::MultimodalBatch;
use crate::diffnet::{
    finite_difference_grad, max_relative_error, mlp_finite_difference_grad, Activation, Mlp, MlpSpec, ParamStore,
    Tensor,
};
use crate::error::Result;
use crate::gaussians::{geometric_mean_of_experts, product_of_experts, DiagGaussian};
use crate::model::{assemble_log_ratios, DiscriminatorMode, FactorLogits, LinearGaussianRig, Model, ModelSpec};
use crate::rng::Rng;
use crate::training::{discriminator_objective, generator_objective, DiscriminatorNoise, GeneratorNoise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    Grad,
    Gaussian,
    Factorization,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Grad, Suite::Gaussian, Suite::Factorization];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Grad => "grad",
            Suite::Gaussian => "gaussian",
            Suite::Factorization => "factorization",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(suite: Suite, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult {
            suite: suite.name(),
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
        }
    }
}

/// Assembles `log r` from factor logits; swappable so the factorization
/// check can be shown to catch a broken assembly.
pub type Assembler = fn(&FactorLogits) -> Vec<f64>;

pub fn standard_assembler(f: &FactorLogits) -> Vec<f64> {
    assemble_log_ratios(f)
}

/// Backprop vs central differences on `count` random MLPs with at most
/// three layers and widths at most 16.
pub fn grad_checks(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::stream(seed, 40);
    let mut out = Vec::with_capacity(count + 2);
    for k in 0..count {
        let layers = 1 + rng.below(3);
        let widths: Vec<usize> = (0..=layers).map(|_| 1 + rng.below(16)).collect();
        let act = if k % 2 == 0 { Activation::Tanh } else { Activation::LeakyRelu };
        let net = Mlp::new("net", MlpSpec::new(widths.clone(), act)?);
        let mut store = ParamStore::new();
        net.register(&mut store, &mut rng)?;
        let rows = 1 + rng.below(5);
        let input = Tensor::matrix(rows, widths[0], rng.normals(rows * widths[0]))?;
        let weights = Tensor::matrix(rows, widths[layers], rng.normals(rows * widths[layers]))?;
        let loss = |y: &Tensor| y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>();
        let (_, cache) = net.forward(&store, &input)?;
        store.zero_grads();
        net.backward(&mut store, &cache, &weights)?;
        let fd = mlp_finite_difference_grad(&net, &store, &input, loss, 1e-4)?;
        let err = max_relative_error(&store.grads(), &fd, 1e-8);
        out.push(CheckResult::below(Suite::Grad, format!("mlp{k} {widths:?} {}", act.name()), err, 1e-5));
    }
    for mode in [DiscriminatorMode::Factorized, DiscriminatorMode::Joint] {
        let (g, d) = objective_grad_errors(mode, seed)?;
        out.push(CheckResult::below(Suite::Grad, format!("generator objective ({})", mode.name()), g, 1e-5));
        out.push(CheckResult::below(Suite::Grad, format!("discriminator objective ({})", mode.name()), d, 1e-5));
    }
    Ok(out)
}

fn objective_grad_errors(mode: DiscriminatorMode, seed: u64) -> Result<(f64, f64)> {
    let mut rng = Rng::stream(seed, 41);
    let mut spec = ModelSpec::new(vec![2, 3], 2, 1);
    spec.encoder_hidden = vec![5];
    spec.decoder_hidden = vec![4];
    spec.discriminator_hidden = vec![6];
    spec.generator_activation = Activation::Tanh;
    spec.discriminator_activation = Activation::Tanh;
    spec.discriminator_mode = mode;
    let mut model = Model::new(spec, &mut rng)?;
    let x0 = Tensor::matrix(6, 2, rng.normals(12))?;
    let x1 = Tensor::matrix(6, 3, rng.normals(18))?;
    let batch = MultimodalBatch::new(vec![x0, x1], None, vec![true, false, true, true, false, true])?;

    let noise = GeneratorNoise::draw(model.spec(), &batch, &mut rng);
    model.generator_mut().zero_grads();
    generator_objective(&mut model.parts_mut(), &batch, &noise, true)?;
    let mut probe = model.clone();
    let fd = finite_difference_grad(
        model.generator(),
        |p| {
            probe.generator_mut().load_values(&p.values())?;
            let l = generator_objective(&mut probe.parts_mut(), &batch, &noise, false)?;
            Ok(l.get("gen_total").unwrap_or(f64::NAN))
        },
        1e-5,
    )?;
    let gen_err = max_relative_error(&model.generator().grads(), &fd, 1e-6);

    let noise = DiscriminatorNoise::draw(model.spec(), &batch, &mut rng);
    model.discriminator_mut().zero_grads();
    discriminator_objective(&mut model.parts_mut(), &batch, &noise, true)?;
    let mut probe = model.clone();
    let fd = finite_difference_grad(
        model.discriminator(),
        |p| {
            probe.discriminator_mut().load_values(&p.values())?;
            let l = discriminator_objective(&mut probe.parts_mut(), &batch, &noise, false)?;
            Ok(l.0.iter().filter(|(n, _)| !n.ends_with("skipped")).map(|(_, v)| v).sum())
        },
        1e-5,
    )?;
    let disc_err = max_relative_error(&model.discriminator().grads(), &fd, 1e-6);
    Ok((gen_err, disc_err))
}

/// Total variation between a closed-form density and the grid-normalized
/// product of expert densities (raised to `power`), on a rectangular grid.
fn grid_tv(experts: &[DiagGaussian], closed: &DiagGaussian, power: f64, half_width: f64, n: usize) -> Result<f64> {
    let dim = closed.dim();
    let lo: Vec<f64> = (0..dim).map(|d| closed.mean()[d] - half_width).collect();
    let step = 2.0 * half_width / (n - 1) as f64;
    let total = n.pow(dim as u32);
    let mut unnorm = Vec::with_capacity(total);
    let mut exact = Vec::with_capacity(total);
    let mut point = vec![0.0; dim];
    for idx in 0..total {
        let mut rest = idx;
        for (d, p) in point.iter_mut().enumerate() {
            *p = lo[d] + step * (rest % n) as f64;
            rest /= n;
        }
        let mut log_q = 0.0;
        for e in experts {
            log_q += power * e.log_pdf(&point)?;
        }
        unnorm.push(log_q.exp());
        exact.push(closed.pdf(&point)?);
    }
    let cell = step.powi(dim as i32);
    let z: f64 = unnorm.iter().sum::<f64>() * cell;
    Ok(0.5 * unnorm.iter().zip(&exact).map(|(u, e)| (u / z - e).abs()).sum::<f64>() * cell)
}

pub fn gaussian_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::stream(seed, 42);
    let mut out = Vec::new();
    let two = product_of_experts(&[DiagGaussian::new(vec![0.0], vec![0.0])?, DiagGaussian::new(vec![2.0], vec![0.0])?])?;
    let err = (two.mean()[0] - 1.0).abs().max((two.variance()[0] - 0.5).abs());
    out.push(CheckResult::below(Suite::Gaussian, "N(0,1) x N(2,1) = N(1,0.5)", err, 1e-12));
    for dim in [1usize, 2] {
        let experts: Vec<DiagGaussian> = (0..3)
            .map(|_| {
                let mean = (0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                let lv = (0..dim).map(|_| rng.uniform_in(-0.7, 0.7)).collect();
                DiagGaussian::new(mean, lv)
            })
            .collect::<Result<_>>()?;
        let n = if dim == 1 { 4001 } else { 601 };
        let poe = product_of_experts(&experts)?;
        let tv = grid_tv(&experts, &poe, 1.0, 8.0 * poe.variance().iter().cloned().fold(0.0, f64::max).sqrt(), n)?;
        out.push(CheckResult::below(Suite::Gaussian, format!("product of experts, {dim}-d grid"), tv, 1e-6));
        let gm = geometric_mean_of_experts(&experts)?;
        let power = 1.0 / experts.len() as f64;
        let tv = grid_tv(&experts, &gm, power, 8.0 * gm.variance().iter().cloned().fold(0.0, f64::max).sqrt(), n)?;
        out.push(CheckResult::below(Suite::Gaussian, format!("geometric mean of experts, {dim}-d grid"), tv, 1e-6));
    }
    let e = DiagGaussian::new(vec![0.3, -1.2], vec![-0.4, 0.9])?;
    let same = geometric_mean_of_experts(&[e.clone(), e.clone(), e.clone()])?;
    let diff = if same == e { 0.0 } else { 1.0 };
    out.push(CheckResult::below(Suite::Gaussian, "geometric mean of identical experts", diff, 0.5));
    Ok(out)
}

/// Assembled factor logits against the joint log-ratio at `points` random
/// draws from the rig's encoder and decoder systems.
pub fn factorization_checks(points: usize, seed: u64, assembler: Assembler) -> Result<Vec<CheckResult>> {
    let mut rng = Rng::stream(seed, 43);
    let rig = LinearGaussianRig::random(vec![2, 2], 2, 1, &mut rng)?;
    let mut worst = 0.0f64;
    let mut clamped = 0usize;
    for k in 0..points {
        let point = match k % 3 {
            0 => rig.sample_decoder(&mut rng),
            r => rig.sample_encoder(r - 1, &mut rng),
        };
        let f = rig.factor_logits(&point)?;
        if std::iter::once(f.c).chain(f.a.iter().copied()).chain(f.b.iter().copied()).any(|t| t.abs() >= 30.0) {
            clamped += 1;
        }
        let lr = assembler(&f);
        for i in 0..rig.modalities() {
            worst = worst.max((lr[i] - rig.joint_log_ratio(i, &point)?).abs());
        }
    }
    Ok(vec![
        CheckResult::below(Suite::Factorization, format!("assembled vs joint log-ratio, {points} points"), worst, 1e-9),
        CheckResult::below(Suite::Factorization, "factor logits inside the clamp", clamped as f64, 0.5),
    ])
}

/// Runs the selected suites (all when `only` is empty).
pub fn run(only: &[Suite], seed: u64, assembler: Assembler) -> Result<Vec<CheckResult>> {
    let suites: Vec<Suite> = if only.is_empty() { Suite::ALL.to_vec() } else { only.to_vec() };
    let mut out = Vec::new();
    for s in suites {
        out.extend(match s {
            Suite::Grad => grad_checks(5, seed)?,
            Suite::Gaussian => gaussian_checks(seed)?,
            Suite::Factorization => factorization_checks(1000, seed, assembler)?,
        });
    }
    Ok(out)
}
