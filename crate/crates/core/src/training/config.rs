use crate::diffnet::{Activation, AdamConfig};
use crate::error::{Error, Result};
use crate::gaussians::MeanFunction;
use crate::kv::{join_list, KvDoc, KvWriter};
use crate::model::{DiscriminatorMode, ModelSpec};

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub modality_dims: Vec<usize>,
    pub content_dim: usize,
    pub style_dim: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub adam: AdamConfig,
    pub ema_decay: f64,
    pub ema_start: usize,
    /// Fraction of training rows that stay cross-modally paired.
    pub paired_fraction: f64,
    /// Train on the paired rows only, discarding the rest.
    pub drop_unpaired: bool,
    pub discriminator_mode: DiscriminatorMode,
    pub mean_function: MeanFunction,
    pub seed: u64,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub generator_activation: Activation,
    pub discriminator_activation: Activation,
    pub grad_clip: f64,
    pub report_every: usize,
    /// Checkpoint cadence in iterations; 0 writes only the final model.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Defaults for the given data and code sizes. `ema_start` is a fifth of
    /// the iterations.
    pub fn new(modality_dims: Vec<usize>, content_dim: usize, style_dim: usize) -> Self {
        let spec = ModelSpec::new(modality_dims.clone(), content_dim, style_dim);
        let iterations = 20_000;
        TrainConfig {
            modality_dims,
            content_dim,
            style_dim,
            batch_size: 64,
            iterations,
            adam: AdamConfig::default(),
            ema_decay: 0.9999,
            ema_start: iterations / 5,
            paired_fraction: 1.0,
            drop_unpaired: false,
            discriminator_mode: DiscriminatorMode::Factorized,
            mean_function: MeanFunction::Arithmetic,
            seed: 0,
            encoder_hidden: spec.encoder_hidden,
            decoder_hidden: spec.decoder_hidden,
            discriminator_hidden: spec.discriminator_hidden,
            generator_activation: spec.generator_activation,
            discriminator_activation: spec.discriminator_activation,
            grad_clip: 10.0,
            report_every: 100,
            checkpoint_every: 0,
        }
    }

    /// Sets the iteration count and moves `ema_start` along with it.
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self.ema_start = iterations / 5;
        self
    }

    pub fn modalities(&self) -> usize {
        self.modality_dims.len()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            modality_dims: self.modality_dims.clone(),
            content_dim: self.content_dim,
            style_dim: self.style_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            decoder_hidden: self.decoder_hidden.clone(),
            discriminator_hidden: self.discriminator_hidden.clone(),
            generator_activation: self.generator_activation,
            discriminator_activation: self.discriminator_activation,
            discriminator_mode: self.discriminator_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        self.adam.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.paired_fraction > 0.0 && self.paired_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "paired_fraction must lie in (0, 1], got {}",
                self.paired_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config(format!("grad_clip must be positive, got {}", self.grad_clip)));
        }
        if self.report_every == 0 {
            return Err(Error::Config("report_every must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self, w: &mut KvWriter) {
        w.set("modality_dims", join_list(&self.modality_dims))
            .set("content_dim", self.content_dim)
            .set("style_dim", self.style_dim)
            .set("batch_size", self.batch_size)
            .set("iterations", self.iterations)
            .set("lr", self.adam.lr)
            .set("beta1", self.adam.beta1)
            .set("beta2", self.adam.beta2)
            .set("adam_eps", self.adam.eps)
            .set("ema_decay", self.ema_decay)
            .set("ema_start", self.ema_start)
            .set("paired_fraction", self.paired_fraction)
            .set("drop_unpaired", self.drop_unpaired)
            .set("discriminator_mode", self.discriminator_mode.name())
            .set("mean_function", self.mean_function.name())
            .set("seed", self.seed)
            .set("encoder_hidden", join_list(&self.encoder_hidden))
            .set("decoder_hidden", join_list(&self.decoder_hidden))
            .set("discriminator_hidden", join_list(&self.discriminator_hidden))
            .set("generator_activation", self.generator_activation.name())
            .set("discriminator_activation", self.discriminator_activation.name())
            .set("grad_clip", self.grad_clip)
            .set("report_every", self.report_every)
            .set("checkpoint_every", self.checkpoint_every);
    }

    /// Reads the training keys from `doc`, leaving other keys in place.
    /// Dimensions are required; everything else defaults. When `iterations`
    /// is given without `ema_start`, the latter follows it.
    pub fn from_kv(doc: &mut KvDoc) -> Result<Self> {
        let mut c = TrainConfig::new(
            doc.require_list("modality_dims")?,
            doc.require("content_dim")?,
            doc.require("style_dim")?,
        );
        macro_rules! opt {
            ($key:literal, $field:expr) => {
                if let Some(v) = doc.take($key)? {
                    $field = v;
                }
            };
        }
        opt!("batch_size", c.batch_size);
        if let Some(v) = doc.take("iterations")? {
            c = c.with_iterations(v);
        }
        opt!("lr", c.adam.lr);
        opt!("beta1", c.adam.beta1);
        opt!("beta2", c.adam.beta2);
        opt!("adam_eps", c.adam.eps);
        opt!("ema_decay", c.ema_decay);
        opt!("ema_start", c.ema_start);
        opt!("paired_fraction", c.paired_fraction);
        opt!("drop_unpaired", c.drop_unpaired);
        opt!("seed", c.seed);
        opt!("grad_clip", c.grad_clip);
        opt!("report_every", c.report_every);
        opt!("checkpoint_every", c.checkpoint_every);
        if let Some(v) = doc.take_str("discriminator_mode") {
            c.discriminator_mode = DiscriminatorMode::parse(&v).map_err(config_err)?;
        }
        if let Some(v) = doc.take_str("mean_function") {
            c.mean_function = MeanFunction::parse(&v).map_err(config_err)?;
        }
        if let Some(v) = doc.take_list("encoder_hidden")? {
            c.encoder_hidden = v;
        }
        if let Some(v) = doc.take_list("decoder_hidden")? {
            c.decoder_hidden = v;
        }
        if let Some(v) = doc.take_list("discriminator_hidden")? {
            c.discriminator_hidden = v;
        }
        if let Some(v) = doc.take_str("generator_activation") {
            c.generator_activation = Activation::parse(&v).map_err(config_err)?;
        }
        if let Some(v) = doc.take_str("discriminator_activation") {
            c.discriminator_activation = Activation::parse(&v).map_err(config_err)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn config_err(e: Error) -> Error {
    Error::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::new(vec![2, 2], 2, 1);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.iterations, 20_000);
        assert_eq!(c.ema_start, 4_000);
        assert_eq!(c.adam.lr, 2e-4);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = TrainConfig::new(vec![2, 3], 2, 0).with_iterations(500);
        c.discriminator_mode = DiscriminatorMode::Joint;
        c.paired_fraction = 0.2;
        c.encoder_hidden = vec![8, 8];
        let mut w = KvWriter::new();
        c.to_kv(&mut w);
        let mut doc = KvDoc::parse(&w.render(), "cfg").unwrap();
        assert_eq!(TrainConfig::from_kv(&mut doc).unwrap(), c);
        doc.finish().unwrap();
    }

    #[test]
    fn iterations_move_ema_start() {
        let mut doc = KvDoc::parse("modality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 100\n", "c").unwrap();
        assert_eq!(TrainConfig::from_kv(&mut doc).unwrap().ema_start, 20);
    }

    #[test]
    fn invalid_values_rejected() {
        let base = "modality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\n";
        for extra in ["batch_size = 1", "paired_fraction = 0", "ema_decay = 1", "discriminator_mode = big"] {
            let mut doc = KvDoc::parse(&format!("{base}{extra}\n"), "c").unwrap();
            assert!(TrainConfig::from_kv(&mut doc).is_err(), "{extra}");
        }
    }
}
