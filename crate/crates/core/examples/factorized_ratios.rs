//! On a linear-Gaussian system every factor logit has a closed form, so the
//! assembled log-ratios can be compared with the joint ones directly.

use mmali::model::{assemble_log_ratios, LinearGaussianRig};
use mmali::Rng;

fn main() -> mmali::Result<()> {
    let mut rng = Rng::seed_from(7);
    let rig = LinearGaussianRig::random(vec![2, 2], 2, 1, &mut rng)?;
    for k in 0..6 {
        let point = if k % 2 == 0 { rig.sample_decoder(&mut rng) } else { rig.sample_encoder(0, &mut rng) };
        let f = rig.factor_logits(&point)?;
        let assembled = assemble_log_ratios(&f);
        let joint: Vec<f64> = (0..2).map(|i| rig.joint_log_ratio(i, &point)).collect::<mmali::Result<_>>()?;
        println!(
            "{} C {:+.3} A {:+.3?} B {:+.3?} -> log r {:+.6?} (joint {:+.6?})",
            if k % 2 == 0 { "decoder" } else { "encoder" },
            f.c,
            f.a,
            f.b,
            assembled,
            joint
        );
    }
    Ok(())
}
