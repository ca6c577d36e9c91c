use mmali::data::MultimodalBatch;
use mmali::diffnet::{finite_difference_grad, max_relative_error, Activation, Tensor};
use mmali::model::{DiscriminatorMode, Model, ModelSpec};
use mmali::training::{discriminator_objective, generator_objective, DiscriminatorNoise, GeneratorNoise, Losses};
use mmali::Rng;

fn small_model(mode: DiscriminatorMode, seed: u64) -> Model {
    let mut spec = ModelSpec::new(vec![2, 3], 2, 1);
    spec.encoder_hidden = vec![5];
    spec.decoder_hidden = vec![4];
    spec.discriminator_hidden = vec![6];
    spec.generator_activation = Activation::Tanh;
    spec.discriminator_activation = Activation::Tanh;
    spec.discriminator_mode = mode;
    Model::new(spec, &mut Rng::seed_from(seed)).unwrap()
}

fn small_batch(rng: &mut Rng) -> MultimodalBatch {
    let x0 = Tensor::matrix(7, 2, rng.normals(14)).unwrap();
    let x1 = Tensor::matrix(7, 3, rng.normals(21)).unwrap();
    let paired = vec![true, false, true, true, false, true, true];
    MultimodalBatch::new(vec![x0, x1], None, paired).unwrap()
}

fn total(l: &Losses, prefixes: &[&str]) -> f64 {
    l.0.iter()
        .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p)) && !n.ends_with("skipped"))
        .map(|(_, v)| v)
        .sum()
}

fn check_generator(mode: DiscriminatorMode) {
    let mut rng = Rng::seed_from(3);
    let mut model = small_model(mode, 1);
    let batch = small_batch(&mut rng);
    let noise = GeneratorNoise::draw(model.spec(), &batch, &mut rng);
    model.generator_mut().zero_grads();
    let disc_before = model.discriminator().values();
    let losses = generator_objective(&mut model.parts_mut(), &batch, &noise, true).unwrap();
    assert!((losses.get("gen_total").unwrap() - total(&losses, &["gen_enc", "gen_dec"])).abs() < 1e-12);
    assert_eq!(model.discriminator().values(), disc_before);
    assert!(model.discriminator().grads().values().all(|g| g.data().iter().all(|&v| v == 0.0)));

    let mut probe = model.clone();
    let fd = finite_difference_grad(
        model.generator(),
        |p| {
            probe.generator_mut().load_values(&p.values())?;
            let l = generator_objective(&mut probe.parts_mut(), &batch, &noise, false)?;
            Ok(l.get("gen_total").unwrap())
        },
        1e-5,
    )
    .unwrap();
    let err = max_relative_error(&model.generator().grads(), &fd, 1e-6);
    assert!(err < 1e-5, "{mode:?} generator max relative error {err}");
}

fn check_discriminator(mode: DiscriminatorMode) {
    let mut rng = Rng::seed_from(4);
    let mut model = small_model(mode, 2);
    let batch = small_batch(&mut rng);
    let noise = DiscriminatorNoise::draw(model.spec(), &batch, &mut rng);
    model.discriminator_mut().zero_grads();
    let gen_before = model.generator().values();
    discriminator_objective(&mut model.parts_mut(), &batch, &noise, true).unwrap();
    assert_eq!(model.generator().values(), gen_before);
    assert!(model.generator().grads().values().all(|g| g.data().iter().all(|&v| v == 0.0)));

    let mut probe = model.clone();
    let fd = finite_difference_grad(
        model.discriminator(),
        |p| {
            probe.discriminator_mut().load_values(&p.values())?;
            let l = discriminator_objective(&mut probe.parts_mut(), &batch, &noise, false)?;
            Ok(total(&l, &["disc_"]))
        },
        1e-5,
    )
    .unwrap();
    let err = max_relative_error(&model.discriminator().grads(), &fd, 1e-6);
    assert!(err < 1e-5, "{mode:?} discriminator max relative error {err}");
}

#[test]
fn factorized_generator_gradients_match_finite_differences() {
    check_generator(DiscriminatorMode::Factorized);
}

#[test]
fn joint_generator_gradients_match_finite_differences() {
    check_generator(DiscriminatorMode::Joint);
}

#[test]
fn factorized_discriminator_gradients_match_finite_differences() {
    check_discriminator(DiscriminatorMode::Factorized);
}

#[test]
fn joint_discriminator_gradients_match_finite_differences() {
    check_discriminator(DiscriminatorMode::Joint);
}

#[test]
fn unpaired_rows_never_reach_c() {
    let mut rng = Rng::seed_from(5);
    let mut model = small_model(DiscriminatorMode::Factorized, 3);
    let mut batch = small_batch(&mut rng);
    let noise = DiscriminatorNoise::draw(model.spec(), &batch, &mut rng);
    model.discriminator_mut().zero_grads();
    discriminator_objective(&mut model.parts_mut(), &batch, &noise, true).unwrap();
    let before = model.discriminator().grads();
    for r in batch.unpaired_rows() {
        for x in batch.x.iter_mut() {
            for v in x.row_mut(r) {
                *v += 5.0;
            }
        }
    }
    model.discriminator_mut().zero_grads();
    discriminator_objective(&mut model.parts_mut(), &batch, &noise, true).unwrap();
    let after = model.discriminator().grads();
    for (name, g) in &after {
        if name.starts_with("c.l") {
            assert_eq!(g, &before[name], "{name}");
        } else if name.starts_with("a0.") || name.starts_with("b1.") {
            assert_ne!(g, &before[name], "{name}");
        }
    }
}

#[test]
fn symmetric_start_losses() {
    let mut rng = Rng::seed_from(6);
    let mut model = small_model(DiscriminatorMode::Factorized, 4);
    for (name, _) in model.discriminator().values() {
        let v = model.discriminator().value(&name).unwrap().map(|_| 0.0);
        model.discriminator_mut().set_value(&name, v).unwrap();
    }
    let batch = small_batch(&mut rng);
    let noise = DiscriminatorNoise::draw(model.spec(), &batch, &mut rng);
    let d = discriminator_objective(&mut model.parts_mut(), &batch, &noise, false).unwrap();
    for (name, v) in &d.0 {
        if !name.ends_with("skipped") {
            assert!((v - std::f64::consts::LN_2).abs() < 1e-12, "{name} = {v}");
        }
    }
    let noise = GeneratorNoise::draw(model.spec(), &batch, &mut rng);
    let g = generator_objective(&mut model.parts_mut(), &batch, &noise, false).unwrap();
    assert!((g.get("gen_dec").unwrap() - 3f64.ln()).abs() < 1e-12);
    assert_eq!(g.get("gen_enc0").unwrap(), 0.0);
    assert_eq!(g.get("gen_enc1").unwrap(), 0.0);
}
