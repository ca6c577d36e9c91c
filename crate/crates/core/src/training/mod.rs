//! Adversarial training: factor discriminators against encoders and decoders.

mod config;
mod metrics;
pub mod objectives;
mod ratio_fit;

pub use config::TrainConfig;
pub use metrics::{MetricRow, MetricsLog};
pub use objectives::{
    cross_entropy, discriminator_objective, generator_objective, logistic_loss, DiscriminatorNoise, GeneratorNoise,
    Losses,
};
pub use ratio_fit::{fit_binary_logit, fit_rig_discriminators, BinaryFit};

use std::path::{Path, PathBuf};

use crate::data::{unpair, MultimodalBatch};
use crate::diffnet::{clip_grad_norm, Adam, Ema};
use crate::error::{Error, Result};
use crate::model::{DiscriminatorMode, Model};
use crate::rng::Rng;

/// Losses averaged over one reporting window.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Iteration count at the end of the window.
    pub iteration: usize,
    pub losses: Losses,
}

/// Where training output goes besides the returned log.
#[derive(Debug, Clone, Default)]
pub struct TrainSinks {
    /// Checkpoints are written to `checkpoint_dir/iter-{n}` and `checkpoint_dir/final`.
    pub checkpoint_dir: Option<PathBuf>,
    /// The metrics log is rewritten here after every report.
    pub metrics_csv: Option<PathBuf>,
}

impl TrainSinks {
    pub fn none() -> Self {
        TrainSinks::default()
    }
}

pub struct TrainOutcome {
    /// Generator weights are the EMA shadow.
    pub model: Model,
    pub log: MetricsLog,
    pub reports: Vec<LossReport>,
}

/// Owns a model and its optimizers for step-by-step training.
pub struct Trainer {
    model: Model,
    gen_opt: Adam,
    disc_opt: Adam,
    ema: Ema,
    grad_clip: f64,
    iteration: usize,
    rng: Rng,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model_spec(), &mut Rng::stream(config.seed, 10))?;
        Self::from_model(model, config)
    }

    pub fn from_model(model: Model, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            model,
            gen_opt: Adam::new(config.adam)?,
            disc_opt: Adam::new(config.adam)?,
            ema: Ema::new(config.ema_decay, config.ema_start)?,
            grad_clip: config.grad_clip,
            iteration: 0,
            rng: Rng::stream(config.seed, 12),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One Adam step on every discriminator. Generator weights are untouched.
    pub fn discriminator_step(&mut self, batch: &MultimodalBatch) -> Result<Losses> {
        let noise = DiscriminatorNoise::draw(self.model.spec(), batch, &mut self.rng);
        let mut parts = self.model.parts_mut();
        parts.discriminator.zero_grads();
        let losses = discriminator_objective(&mut parts, batch, &noise, true)?;
        if !losses.all_finite() {
            return Err(Error::NonFinite(format!("discriminator losses {:?}", losses.0)));
        }
        clip_grad_norm(&mut [&mut *parts.discriminator], self.grad_clip);
        self.disc_opt.step(parts.discriminator)?;
        Ok(losses)
    }

    /// One Adam step on encoders and decoders jointly, then the EMA update.
    pub fn generator_step(&mut self, batch: &MultimodalBatch) -> Result<Losses> {
        let noise = GeneratorNoise::draw(self.model.spec(), batch, &mut self.rng);
        let mut parts = self.model.parts_mut();
        parts.generator.zero_grads();
        let losses = generator_objective(&mut parts, batch, &noise, true)?;
        clip_grad_norm(&mut [&mut *parts.generator], self.grad_clip);
        self.gen_opt.step(parts.generator)?;
        self.ema.update(self.model.generator(), self.iteration)?;
        Ok(losses)
    }

    /// Draws a batch with replacement, then one discriminator and one
    /// generator step.
    pub fn step(&mut self, data: &MultimodalBatch, batch_size: usize) -> Result<Losses> {
        let idx: Vec<usize> = (0..batch_size).map(|_| self.rng.below(data.rows())).collect();
        let batch = data.select_rows(&idx);
        let iteration = self.iteration;
        let diverged = |e: Error| match e {
            Error::NonFinite(message) => Error::Diverged { iteration, message },
            other => other,
        };
        let mut losses = self.discriminator_step(&batch).map_err(diverged)?;
        losses.extend(self.generator_step(&batch).map_err(diverged)?);
        self.iteration += 1;
        Ok(losses)
    }

    /// A copy of the model carrying the EMA generator weights.
    pub fn averaged_model(&self) -> Result<Model> {
        let mut model = self.model.clone();
        if self.ema.shadow().is_some() {
            self.ema.copy_to(model.generator_mut())?;
        }
        Ok(model)
    }
}

/// Applies the pairing policy of `config` to a training split.
pub fn prepare_training_rows(config: &TrainConfig, train: &MultimodalBatch) -> Result<MultimodalBatch> {
    let mut rng = Rng::stream(config.seed, 11);
    let rows = unpair(train, 1.0 - config.paired_fraction, &mut rng)?;
    Ok(if config.drop_unpaired { rows.paired_only() } else { rows })
}

fn check_dims(config: &TrainConfig, train: &MultimodalBatch) -> Result<()> {
    if train.modality_dims() != config.modality_dims {
        return Err(Error::ManifestMismatch(format!(
            "config expects modality dims {:?}, dataset has {:?}",
            config.modality_dims,
            train.modality_dims()
        )));
    }
    if train.rows() == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    Ok(())
}

struct Window {
    sums: Vec<(String, f64)>,
    count: usize,
}

impl Window {
    fn add(&mut self, losses: &Losses) {
        for (name, v) in &losses.0 {
            match self.sums.iter_mut().find(|(n, _)| n == name) {
                Some((_, s)) => *s += v,
                None => self.sums.push((name.clone(), *v)),
            }
        }
        self.count += 1;
    }

    fn take(&mut self, iteration: usize) -> LossReport {
        let k = self.count as f64;
        let losses = Losses(self.sums.drain(..).map(|(n, s)| (n, s / k)).collect());
        self.count = 0;
        LossReport { iteration, losses }
    }
}

/// Trains on `train` (the training split) for `config.iterations`.
pub fn train(config: &TrainConfig, train: &MultimodalBatch, sinks: &TrainSinks) -> Result<TrainOutcome> {
    config.validate()?;
    check_dims(config, train)?;
    let rows = prepare_training_rows(config, train)?;
    if rows.rows() == 0 {
        return Err(Error::invalid("no training rows left after pairing policy"));
    }
    let mut trainer = Trainer::new(config)?;
    let mut log = MetricsLog::new();
    let mut reports = Vec::new();
    let mut window = Window {
        sums: Vec::new(),
        count: 0,
    };
    for it in 1..=config.iterations {
        let losses = trainer.step(&rows, config.batch_size)?;
        window.add(&losses);
        if it % config.report_every == 0 || it == config.iterations {
            let report = window.take(it);
            log.push_losses(config.seed, &report);
            reports.push(report);
            if let Some(path) = &sinks.metrics_csv {
                log.write_csv(path)?;
            }
        }
        if let Some(dir) = &sinks.checkpoint_dir {
            if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 {
                trainer.averaged_model()?.save(&dir.join(format!("iter-{it}")))?;
            }
        }
    }
    let model = trainer.averaged_model()?;
    if let Some(dir) = &sinks.checkpoint_dir {
        model.save(&dir.join("final"))?;
    }
    if let Some(path) = &sinks.metrics_csv {
        log.write_csv(path)?;
    }
    Ok(TrainOutcome { model, log, reports })
}

/// `train` with the single `(M + 1)`-way discriminator.
pub fn train_joint_baseline(config: &TrainConfig, train_rows: &MultimodalBatch, sinks: &TrainSinks) -> Result<TrainOutcome> {
    let mut config = config.clone();
    config.discriminator_mode = DiscriminatorMode::Joint;
    train(&config, train_rows, sinks)
}

/// Path of the final checkpoint written by `train`.
pub fn final_checkpoint(dir: &Path) -> PathBuf {
    dir.join("final")
}
