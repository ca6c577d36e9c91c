//! The acceptance gate. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.
//!
//! Reference values come from oracles written here, not from the library:
//! a separate finite-difference loop, grid normalization with a hand-coded
//! normal density, chain-rule densities of the linear-Gaussian rig, and the
//! closed-form log-ratio of two unit Gaussians.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use mmali::data::{generate_gaussian_ring, Dataset, RingConfig};
use mmali::diffnet::{Activation, AdamConfig, Mlp, MlpSpec, ParamStore, Tensor};
use mmali::eval::{cca_correlation, coherence_report, latent_probe, CodeSelector, CoherenceReport};
use mmali::gaussians::{geometric_mean_of_experts, product_of_experts, DiagGaussian};
use mmali::model::{assemble_log_ratios, DiscriminatorMode, LinearGaussianRig};
use mmali::training::{fit_binary_logit, train, TrainConfig, TrainSinks};
use mmali::Rng;

const SEEDS: [u64; 3] = [0, 1, 2];
const CLASSES: usize = 8;
const JOINT_DRAWS: usize = 10_000;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn diag_pdf(x: &[f64], g: &DiagGaussian) -> f64 {
    x.iter()
        .zip(g.mean())
        .zip(g.variance())
        .map(|((&x, &m), v)| normal_pdf(x, m, v))
        .product()
}

// 1. Gradients

fn criterion_gradients() -> Verdict {
    let start = Instant::now();
    let mut rng = Rng::seed_from(2024);
    let mut worst: f64 = 0.0;
    let mut shapes = Vec::new();
    for k in 0..5 {
        let layers = 1 + k % 3;
        let widths: Vec<usize> = (0..=layers).map(|_| 1 + rng.below(16)).collect();
        let act = if k % 2 == 0 { Activation::Tanh } else { Activation::LeakyRelu };
        let net = Mlp::new("g", MlpSpec::new(widths.clone(), act).unwrap());
        let mut store = ParamStore::new();
        net.register(&mut store, &mut rng).unwrap();
        let rows = 4;
        let input = Tensor::matrix(rows, widths[0], rng.normals(rows * widths[0])).unwrap();
        let w = Tensor::matrix(rows, widths[layers], rng.normals(rows * widths[layers])).unwrap();
        let loss = |s: &ParamStore| -> f64 {
            let y = net.predict(s, &input).unwrap();
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        store.zero_grads();
        let (_, cache) = net.forward(&store, &input).unwrap();
        net.backward(&mut store, &cache, &w).unwrap();
        let names: Vec<String> = store.names().map(str::to_string).collect();
        let h = 1e-5;
        for name in names {
            let bp = store.grad(&name).unwrap().clone();
            for i in 0..bp.len() {
                let mut probe = store.clone();
                let orig = probe.value(&name).unwrap().data()[i];
                probe.value_mut(&name).unwrap().data_mut()[i] = orig + h;
                let up = loss(&probe);
                probe.value_mut(&name).unwrap().data_mut()[i] = orig - h;
                let down = loss(&probe);
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((bp.data()[i] - fd).abs() / (fd.abs() + 1e-8));
            }
        }
        shapes.push(widths);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-5 && secs < 10.0,
        format!("max relative error {worst:.2e} over {shapes:?} (< 1e-5), {secs:.2}s (< 10s)"),
    )
}

// 2. Gaussian closed forms

fn grid_tv_1d(experts: &[DiagGaussian], power: f64, closed: &DiagGaussian) -> f64 {
    let (m, sd) = (closed.mean()[0], closed.variance()[0].sqrt());
    let n = 20_001;
    let (lo, hi) = (m - 12.0 * sd, m + 12.0 * sd);
    let dx = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|k| lo + dx * k as f64).collect();
    let un: Vec<f64> = xs
        .iter()
        .map(|&x| experts.iter().map(|e| diag_pdf(&[x], e).powf(power)).product())
        .collect();
    let z: f64 = un.iter().sum::<f64>() * dx;
    xs.iter()
        .zip(&un)
        .map(|(&x, u)| (u / z - diag_pdf(&[x], closed)).abs())
        .sum::<f64>()
        * dx
        / 2.0
}

fn grid_tv_2d(experts: &[DiagGaussian], power: f64, closed: &DiagGaussian) -> f64 {
    let n = 1201;
    let axes: Vec<Vec<f64>> = (0..2)
        .map(|d| {
            let (m, sd) = (closed.mean()[d], closed.variance()[d].sqrt());
            let lo = m - 12.0 * sd;
            let dx = 24.0 * sd / (n - 1) as f64;
            (0..n).map(|k| lo + dx * k as f64).collect()
        })
        .collect();
    let cell = (axes[0][1] - axes[0][0]) * (axes[1][1] - axes[1][0]);
    let mut un = Vec::with_capacity(n * n);
    let mut exact = Vec::with_capacity(n * n);
    for &a in &axes[0] {
        for &b in &axes[1] {
            let p = [a, b];
            un.push(experts.iter().map(|e| diag_pdf(&p, e).powf(power)).product::<f64>());
            exact.push(diag_pdf(&p, closed));
        }
    }
    let z: f64 = un.iter().sum::<f64>() * cell;
    un.iter().zip(&exact).map(|(u, e)| (u / z - e).abs()).sum::<f64>() * cell / 2.0
}

fn criterion_gaussians() -> Verdict {
    let mut rng = Rng::seed_from(11);
    let mut worst: f64 = 0.0;
    for dim in [1usize, 2] {
        for count in [2usize, 3] {
            let experts: Vec<DiagGaussian> = (0..count)
                .map(|_| {
                    DiagGaussian::new(
                        (0..dim).map(|_| rng.uniform_in(-1.5, 1.5)).collect(),
                        (0..dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            let poe = product_of_experts(&experts).unwrap();
            let gm = geometric_mean_of_experts(&experts).unwrap();
            let power = 1.0 / count as f64;
            let (a, b) = if dim == 1 {
                (grid_tv_1d(&experts, 1.0, &poe), grid_tv_1d(&experts, power, &gm))
            } else {
                (grid_tv_2d(&experts, 1.0, &poe), grid_tv_2d(&experts, power, &gm))
            };
            worst = worst.max(a).max(b);
        }
    }
    let two = product_of_experts(&[
        DiagGaussian::new(vec![0.0], vec![0.0]).unwrap(),
        DiagGaussian::new(vec![2.0], vec![0.0]).unwrap(),
    ])
    .unwrap();
    let exact_err = (two.mean()[0] - 1.0).abs().max((two.variance()[0] - 0.5).abs());
    verdict(
        worst < 1e-6 && exact_err < 1e-12,
        format!("grid TV {worst:.2e} (< 1e-6); N(0,1)xN(2,1) error {exact_err:.1e} (< 1e-12)"),
    )
}

// 3. Factorization identity

fn criterion_factorization() -> Verdict {
    let start = Instant::now();
    let mut rng = Rng::seed_from(5);
    let rig = LinearGaussianRig::random(vec![2, 2], 2, 1, &mut rng).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let point = match k % 3 {
            0 => rig.sample_decoder(&mut rng),
            r => rig.sample_encoder(r - 1, &mut rng),
        };
        let assembled = assemble_log_ratios(&rig.factor_logits(&point).unwrap());
        let log_p = rig.decoder_network().chain_log_density(&point).unwrap();
        for (i, lr) in assembled.iter().enumerate() {
            let log_q = rig.encoder_network(i).chain_log_density(&point).unwrap();
            worst = worst.max((lr - (log_q - log_p)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-9 && secs < 5.0,
        format!("max |assembled - joint| {worst:.2e} at 1000 points (< 1e-9), {secs:.2}s (< 5s)"),
    )
}

// 4. Ratio learning

fn criterion_ratio_learning() -> Verdict {
    let start = Instant::now();
    let mut rng = Rng::seed_from(0);
    let sampler = |shift: f64| {
        move |n: usize, rng: &mut Rng| Tensor::matrix(n, 1, rng.normals(n).into_iter().map(|z| z + shift).collect()).unwrap()
    };
    let fit = fit_binary_logit(
        MlpSpec::new(vec![1, 32, 32, 1], Activation::LeakyRelu).unwrap(),
        AdamConfig::default(),
        20_000,
        64,
        sampler(0.0),
        sampler(1.0),
        &mut rng,
    )
    .unwrap();
    let n = 2001;
    let xs: Vec<f64> = (0..n).map(|k| -2.0 + 5.0 * k as f64 / (n - 1) as f64).collect();
    let logits = fit.logits(&Tensor::matrix(n, 1, xs.clone()).unwrap()).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (x, t) in xs.iter().zip(logits.data()) {
        let w = 0.5 * (normal_pdf(*x, 0.0, 1.0) + normal_pdf(*x, 1.0, 1.0));
        num += w * (t - (0.5 - x)).abs();
        den += w;
    }
    let mae = num / den;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        mae < 0.1 && secs < 120.0,
        format!("density-weighted MAE {mae:.4} on [-2, 3] (< 0.1), {secs:.1}s (< 120s)"),
    )
}

// 5-9, 11. Ring training runs

struct RingRun {
    report: CoherenceReport,
    content_probe: f64,
    style_probe: f64,
    csv: Vec<u8>,
    elapsed: Duration,
}

fn ring_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(vec![2, 2], 2, 1).with_iterations(20_000);
    c.batch_size = 64;
    c.seed = seed;
    c
}

fn ring_run(config: &TrainConfig, data: &Dataset, with_style: bool) -> RingRun {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("metrics.csv");
    let sinks = TrainSinks {
        checkpoint_dir: None,
        metrics_csv: Some(csv_path.clone()),
    };
    let start = Instant::now();
    let outcome = train(config, &data.train, &sinks).unwrap();
    let classifier = data.manifest.ring().unwrap().classifier();
    let mut rng = Rng::seed_from(1000 + config.seed);
    let report = coherence_report(&outcome.model, &data.test, &classifier, JOINT_DRAWS, &mut rng).unwrap();
    let elapsed = start.elapsed();
    let probe = |s| latent_probe(&outcome.model, &data.train, &data.test, s, CLASSES, config.seed).unwrap();
    let content_probe = probe(CodeSelector::Content(0));
    let style_probe = if with_style { probe(CodeSelector::Style(0)) } else { f64::NAN };
    RingRun {
        report,
        content_probe,
        style_probe,
        csv: std::fs::read(&csv_path).unwrap(),
        elapsed,
    }
}

fn print_run(label: &str, seed: u64, r: &RingRun) {
    let c = &r.report.cross;
    println!(
        "    [{label} seed {seed}] joint {:.3} cross 0->1 {:.3} 1->0 {:.3} rec {:.3}/{:.3} synergy(gm) {:.3?} content probe {:.3} style probe {:.3} ({:.0}s)",
        r.report.joint,
        c[0][1],
        c[1][0],
        c[0][0],
        c[1][1],
        r.report.synergy_geometric,
        r.content_probe,
        r.style_probe,
        r.elapsed.as_secs_f64()
    );
}

fn criterion_coherence(runs: &[RingRun]) -> Verdict {
    let a = median(&runs.iter().map(|r| r.report.cross[0][1]).collect::<Vec<_>>());
    let b = median(&runs.iter().map(|r| r.report.cross[1][0]).collect::<Vec<_>>());
    let j = median(&runs.iter().map(|r| r.report.joint).collect::<Vec<_>>());
    let secs: f64 = runs.iter().map(|r| r.elapsed.as_secs_f64()).sum();
    verdict(
        a >= 0.85 && b >= 0.85 && j >= 0.70 && secs < 900.0,
        format!("median cross 0->1 {a:.3}, 1->0 {b:.3} (>= 0.85); median joint {j:.3} (>= 0.70); {secs:.0}s (< 900s)"),
    )
}

fn criterion_factorized_vs_joint(factorized: &[RingRun], joint: &[RingRun]) -> Verdict {
    let f = median(&factorized.iter().map(|r| r.content_probe).collect::<Vec<_>>());
    let j = median(&joint.iter().map(|r| r.content_probe).collect::<Vec<_>>());
    verdict(f >= j, format!("median content probe factorized {f:.3} >= joint baseline {j:.3}"))
}

fn mean_cross(r: &RingRun) -> [f64; 2] {
    [r.report.cross[0][1], r.report.cross[1][0]]
}

fn criterion_unpaired(with_unpaired: &[RingRun], paired_only: &[RingRun]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in 0..2 {
        let u = median(&with_unpaired.iter().map(|r| mean_cross(r)[d]).collect::<Vec<_>>());
        let p = median(&paired_only.iter().map(|r| mean_cross(r)[d]).collect::<Vec<_>>());
        ok &= u - p >= 0.05;
        parts.push(format!("{} unpaired-used {u:.3} vs paired-only {p:.3}", ["0->1", "1->0"][d]));
    }
    verdict(ok, format!("{} (margin >= 0.05 each)", parts.join("; ")))
}

fn criterion_latent_factorization(runs: &[RingRun]) -> Verdict {
    let c = median(&runs.iter().map(|r| r.content_probe).collect::<Vec<_>>());
    let s = median(&runs.iter().map(|r| r.style_probe).collect::<Vec<_>>());
    let limit = 1.0 / CLASSES as f64 + 0.15;
    verdict(
        c >= 0.9 && s <= limit,
        format!("median content probe {c:.3} (>= 0.9); median style probe {s:.3} (<= {limit:.3})"),
    )
}

fn criterion_synergy(runs: &[RingRun]) -> Verdict {
    let e = DiagGaussian::new(vec![0.4, -1.1], vec![-0.3, 0.8]).unwrap();
    let fixed = geometric_mean_of_experts(&[e.clone(), e.clone(), e.clone()]).unwrap();
    let exact = fixed.mean() == e.mean() && fixed.log_var() == e.log_var();
    let gaps: Vec<f64> = runs
        .iter()
        .map(|r| {
            (0..2)
                .map(|j| r.report.synergy_geometric[j] - r.report.cross[j][j].max(r.report.cross[1 - j][j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let gap = median(&gaps);
    verdict(
        exact && gap >= -0.02,
        format!("idempotent: {exact}; median worst synergy minus best single-source coherence {gap:+.3} (>= -0.02)"),
    )
}

fn criterion_determinism(first: &RingRun, data: &Dataset) -> Verdict {
    let second = ring_run(&ring_config(0), data, false);
    let same = first.csv == second.csv && !first.csv.is_empty();
    verdict(same, format!("seed-0 metrics CSVs identical: {same} ({} bytes)", first.csv.len()))
}

// 10. CCA

fn criterion_cca() -> Verdict {
    let mut rng = Rng::seed_from(10);
    let n = 10_000;
    let a = Tensor::matrix(n, 3, rng.normals(3 * n)).unwrap();
    let copied = cca_correlation((&a, &a), (&a, &a), 3).unwrap();
    let b = Tensor::matrix(n, 3, rng.normals(3 * n)).unwrap();
    let c = Tensor::matrix(n, 3, rng.normals(3 * n)).unwrap();
    let d = Tensor::matrix(n, 3, rng.normals(3 * n)).unwrap();
    let independent = cca_correlation((&a, &b), (&c, &d), 3).unwrap();
    verdict(
        (copied - 1.0).abs() <= 1e-6 && independent.abs() < 0.1,
        format!("copied {copied:.9} (1 +- 1e-6); independent {independent:+.4} (|.| < 0.1)"),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n: usize, name: &'static str, v: Verdict| {
        println!("criterion {n:>2} {:<28} {} {}", name, if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    record(1, "gradient oracle", criterion_gradients());
    record(2, "gaussian closed forms", criterion_gaussians());
    record(3, "factorization identity", criterion_factorization());
    record(4, "ratio learning", criterion_ratio_learning());

    let data = generate_gaussian_ring(&RingConfig::default()).unwrap();
    let factorized: Vec<RingRun> = SEEDS
        .iter()
        .map(|&s| {
            let r = ring_run(&ring_config(s), &data, true);
            print_run("factorized", s, &r);
            r
        })
        .collect();
    record(5, "end-to-end coherence", criterion_coherence(&factorized));

    let joint: Vec<RingRun> = SEEDS
        .iter()
        .map(|&s| {
            let mut c = ring_config(s);
            c.discriminator_mode = DiscriminatorMode::Joint;
            let r = ring_run(&c, &data, false);
            print_run("joint", s, &r);
            r
        })
        .collect();
    record(6, "factorized vs joint", criterion_factorized_vs_joint(&factorized, &joint));

    let scarce = |drop: bool| -> Vec<RingRun> {
        SEEDS
            .iter()
            .map(|&s| {
                let mut c = ring_config(s);
                c.paired_fraction = 0.2;
                c.drop_unpaired = drop;
                let r = ring_run(&c, &data, false);
                print_run(if drop { "paired-only 20%" } else { "20% + unpaired" }, s, &r);
                r
            })
            .collect()
    };
    let with_unpaired = scarce(false);
    let paired_only = scarce(true);
    record(7, "unpaired-data utilization", criterion_unpaired(&with_unpaired, &paired_only));
    record(8, "latent factorization", criterion_latent_factorization(&factorized));
    record(9, "synergy fixed point", criterion_synergy(&factorized));
    record(10, "cca score", criterion_cca());
    record(11, "determinism", criterion_determinism(&factorized[0], &data));

    let failed: Vec<String> = results
        .iter()
        .filter(|(_, _, v)| !v.passed)
        .map(|(n, name, _)| format!("{n} ({name})"))
        .collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
