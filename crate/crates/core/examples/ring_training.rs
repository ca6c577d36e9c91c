//! Trains the factorized model on the 8-cluster ring and reports
//! coherences and latent probes.

use mmali::data::{generate_gaussian_ring, RingConfig};
use mmali::eval::{coherence_report, latent_probe, CodeSelector};
use mmali::training::{train, TrainConfig, TrainSinks};
use mmali::Rng;

fn main() -> mmali::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let data = generate_gaussian_ring(&RingConfig::default())?;
    let config = TrainConfig::new(vec![2, 2], 2, 1).with_iterations(iterations);
    let outcome = train(&config, &data.train, &TrainSinks::none())?;
    if let Some(last) = outcome.reports.last() {
        println!("losses at {}: {:?}", last.iteration, last.losses.0);
    }
    let classifier = data.manifest.ring().expect("ring dataset").classifier();
    let report = coherence_report(&outcome.model, &data.test, &classifier, 5000, &mut Rng::seed_from(1))?;
    println!("joint coherence {:.3}", report.joint);
    println!("cross coherence {:.3?}", report.cross);
    println!("synergy (geometric) {:.3?}", report.synergy_geometric);
    for s in [CodeSelector::Content(0), CodeSelector::Style(0)] {
        let acc = latent_probe(&outcome.model, &data.train, &data.test, s, 8, 0)?;
        println!("{} probe accuracy {acc:.3}", s.name());
    }
    Ok(())
}
