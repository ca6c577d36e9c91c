use proptest::prelude::*;

use mmali::data::{unpair, MultimodalBatch};
use mmali::diffnet::Tensor;
use mmali::gaussians::{geometric_mean_of_experts, product_of_experts, DiagGaussian};
use mmali::kv::{KvDoc, KvWriter};
use mmali::model::{assemble_log_ratios, assemble_optimal_discriminator, FactorLogits};
use mmali::training::{logistic_loss, TrainConfig};
use mmali::Rng;

fn gaussian(dim: usize) -> impl Strategy<Value = DiagGaussian> {
    (prop::collection::vec(-3.0..3.0f64, dim), prop::collection::vec(-2.0..2.0f64, dim))
        .prop_map(|(m, lv)| DiagGaussian::new(m, lv).unwrap())
}

fn experts() -> impl Strategy<Value = Vec<DiagGaussian>> {
    (1usize..4).prop_flat_map(|d| prop::collection::vec(gaussian(d), 1..5))
}

proptest! {
    #[test]
    fn product_precision_is_the_sum_of_precisions(es in experts()) {
        let poe = product_of_experts(&es).unwrap();
        for d in 0..poe.dim() {
            let want: f64 = es.iter().map(|e| e.precision()[d]).sum();
            prop_assert!((poe.precision()[d] - want).abs() <= 1e-9 * want);
            let mean: f64 = es.iter().map(|e| e.precision()[d] * e.mean()[d]).sum::<f64>() / want;
            prop_assert!((poe.mean()[d] - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn aggregation_ignores_expert_order(es in experts()) {
        let mut rev = es.clone();
        rev.reverse();
        let (a, b) = (geometric_mean_of_experts(&es).unwrap(), geometric_mean_of_experts(&rev).unwrap());
        for d in 0..a.dim() {
            prop_assert!((a.mean()[d] - b.mean()[d]).abs() < 1e-12);
            prop_assert!((a.log_var()[d] - b.log_var()[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_mean_has_mean_precision(es in experts()) {
        let gm = geometric_mean_of_experts(&es).unwrap();
        let poe = product_of_experts(&es).unwrap();
        let k = es.len() as f64;
        for d in 0..gm.dim() {
            prop_assert!((gm.precision()[d] * k - poe.precision()[d]).abs() <= 1e-9 * poe.precision()[d]);
            prop_assert!((gm.mean()[d] - poe.mean()[d]).abs() < 1e-9 * (1.0 + poe.mean()[d].abs()));
        }
    }

    #[test]
    fn geometric_mean_of_copies_is_the_expert(e in gaussian(3), k in 1usize..6) {
        let gm = geometric_mean_of_experts(&vec![e.clone(); k]).unwrap();
        prop_assert_eq!(gm, e);
    }

    #[test]
    fn single_modality_ratio_is_the_b_logit(b in -40.0..40.0f64) {
        let f = FactorLogits { c: 0.0, a: vec![0.7], b: vec![b] };
        prop_assert!((assemble_log_ratios(&f)[0] - b.clamp(-30.0, 30.0)).abs() < 1e-12);
    }

    #[test]
    fn optimal_discriminator_is_a_distribution(
        c in -50.0..50.0f64,
        a in prop::collection::vec(-50.0..50.0f64, 3),
        b in prop::collection::vec(-50.0..50.0f64, 3),
    ) {
        let d = assemble_optimal_discriminator(&assemble_log_ratios(&FactorLogits { c, a, b }));
        prop_assert_eq!(d.len(), 4);
        prop_assert!(d.iter().all(|p| p.is_finite() && *p >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_loss_is_finite_for_any_logit(ts in prop::collection::vec(-1e6..1e6f64, 2..20)) {
        let n = ts.len();
        let logits = Tensor::matrix(n, 1, ts).unwrap();
        let (loss, grad) = logistic_loss(&logits, n / 2);
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert!(grad.is_finite());
    }

    #[test]
    fn unpairing_keeps_every_modality_a_permutation(rows in 1usize..60, f in 0.0..=1.0f64, seed in 0u64..1000) {
        let x0 = Tensor::matrix(rows, 1, (0..rows).map(|r| r as f64).collect()).unwrap();
        let x1 = Tensor::matrix(rows, 1, (0..rows).map(|r| 1000.0 + r as f64).collect()).unwrap();
        let labels = vec![(0..rows).collect(), (0..rows).collect()];
        let batch = MultimodalBatch::new(vec![x0, x1], Some(labels), vec![true; rows]).unwrap();
        let out = unpair(&batch, f, &mut Rng::seed_from(seed)).unwrap();
        prop_assert_eq!(out.unpaired_rows().len(), (f * rows as f64).floor() as usize);
        for r in out.paired_rows() {
            prop_assert_eq!(out.x[0].row(r)[0] + 1000.0, out.x[1].row(r)[0]);
        }
        for i in 0..2 {
            let mut v: Vec<f64> = out.x[i].data().to_vec();
            v.sort_by(f64::total_cmp);
            let mut w = batch.x[i].data().to_vec();
            w.sort_by(f64::total_cmp);
            prop_assert_eq!(v, w);
            let labels = out.labels_of(i).unwrap();
            for r in 0..rows {
                prop_assert_eq!(labels[r] as f64 + if i == 1 { 1000.0 } else { 0.0 }, out.x[i].row(r)[0]);
            }
        }
    }

    #[test]
    fn train_config_survives_a_kv_round_trip(
        seed in any::<u64>(),
        iterations in 1usize..100_000,
        pf in 0.01..=1.0f64,
        lr in 1e-6..1e-1f64,
    ) {
        let mut c = TrainConfig::new(vec![2, 3], 2, 1).with_iterations(iterations);
        c.seed = seed;
        c.paired_fraction = pf;
        c.adam.lr = lr;
        let mut w = KvWriter::new();
        c.to_kv(&mut w);
        let mut doc = KvDoc::parse(&w.render(), "mem").unwrap();
        let back = TrainConfig::from_kv(&mut doc).unwrap();
        doc.finish().unwrap();
        prop_assert_eq!(back, c);
    }
}
