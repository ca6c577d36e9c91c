//! Encoders, decoders and discriminators of a multimodal adversarially
//! learned inference model with shared content and per-modality style codes.

mod ratios;
pub mod rig;

use std::path::Path;

use crate::diffnet::{checkpoint, Activation, Mlp, MlpSpec, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::gaussians::{DiagGaussian, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::kv::{join_list, KvDoc, KvWriter};
use crate::rng::Rng;

pub use ratios::{
    assemble_log_ratios, assemble_optimal_discriminator, clamp_logit, log_optimal_discriminator, FactorLogits,
    LOGIT_CLAMP,
};
pub use rig::LinearGaussianRig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiscriminatorMode {
    /// Per-modality `A_i`, `B_i` plus the joint data discriminator `C`.
    #[default]
    Factorized,
    /// One `(M + 1)`-way classifier over `(X, S, c)`.
    Joint,
}

impl DiscriminatorMode {
    pub fn name(self) -> &'static str {
        match self {
            DiscriminatorMode::Factorized => "factorized",
            DiscriminatorMode::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "factorized" => Ok(DiscriminatorMode::Factorized),
            "joint" => Ok(DiscriminatorMode::Joint),
            other => Err(Error::invalid(format!("unknown discriminator mode {other}"))),
        }
    }
}

/// Dimensions and architecture of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub modality_dims: Vec<usize>,
    pub content_dim: usize,
    pub style_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub generator_activation: Activation,
    pub discriminator_activation: Activation,
    pub discriminator_mode: DiscriminatorMode,
}

impl ModelSpec {
    /// Desk-scale defaults for `modality_dims` with the given code sizes.
    pub fn new(modality_dims: Vec<usize>, content_dim: usize, style_dim: usize) -> Self {
        ModelSpec {
            modality_dims,
            content_dim,
            style_dim,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            discriminator_hidden: vec![64, 64],
            generator_activation: Activation::LeakyRelu,
            discriminator_activation: Activation::LeakyRelu,
            discriminator_mode: DiscriminatorMode::Factorized,
        }
    }

    pub fn modalities(&self) -> usize {
        self.modality_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.modality_dims.is_empty() {
            return Err(Error::invalid("a model needs at least one modality"));
        }
        if self.modality_dims.iter().any(|&n| n == 0) {
            return Err(Error::invalid(format!("modality dims must be positive: {:?}", self.modality_dims)));
        }
        if self.content_dim + self.style_dim == 0 {
            return Err(Error::invalid("content_dim + style_dim must be positive"));
        }
        let hidden = [&self.encoder_hidden, &self.decoder_hidden, &self.discriminator_hidden];
        if hidden.iter().any(|h| h.iter().any(|&w| w == 0)) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }

    fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut w = Vec::with_capacity(hidden.len() + 2);
        w.push(input);
        w.extend_from_slice(hidden);
        w.push(output);
        w
    }

    pub fn encoder_output_width(&self) -> usize {
        2 * self.content_dim + 2 * self.style_dim
    }

    /// Writes the spec as a `key = value` manifest.
    pub fn to_kv(&self, w: &mut KvWriter) {
        w.set("modalities", self.modalities())
            .set("modality_dims", join_list(&self.modality_dims))
            .set("content_dim", self.content_dim)
            .set("style_dim", self.style_dim)
            .set("encoder_hidden", join_list(&self.encoder_hidden))
            .set("decoder_hidden", join_list(&self.decoder_hidden))
            .set("discriminator_hidden", join_list(&self.discriminator_hidden))
            .set("generator_activation", self.generator_activation.name())
            .set("discriminator_activation", self.discriminator_activation.name())
            .set("discriminator_mode", self.discriminator_mode.name());
    }

    pub fn from_kv(doc: &mut KvDoc) -> Result<Self> {
        let modalities: usize = doc.require("modalities")?;
        let modality_dims: Vec<usize> = doc.require_list("modality_dims")?;
        if modality_dims.len() != modalities {
            return Err(Error::ManifestMismatch(format!(
                "{}: modalities = {modalities} but {} modality dims",
                doc.source().display(),
                modality_dims.len()
            )));
        }
        let spec = ModelSpec {
            modality_dims,
            content_dim: doc.require("content_dim")?,
            style_dim: doc.require("style_dim")?,
            encoder_hidden: doc.require_list("encoder_hidden")?,
            decoder_hidden: doc.require_list("decoder_hidden")?,
            discriminator_hidden: doc.require_list("discriminator_hidden")?,
            generator_activation: Activation::parse(&doc.require::<String>("generator_activation")?)?,
            discriminator_activation: Activation::parse(&doc.require::<String>("discriminator_activation")?)?,
            discriminator_mode: DiscriminatorMode::parse(&doc.require::<String>("discriminator_mode")?)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Content code plus one style code per modality, batched by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub content: Tensor,
    pub styles: Vec<Tensor>,
}

impl LatentSample {
    pub fn rows(&self) -> usize {
        self.content.rows()
    }
}

/// Batched diagonal posteriors `q(c | x_i)` and `q(s_i | x_i)`; log-variances
/// are already clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub content_mean: Tensor,
    pub content_log_var: Tensor,
    pub style_mean: Tensor,
    pub style_log_var: Tensor,
}

impl Posteriors {
    /// Splits a raw encoder output `[μ_c, logvar_c, μ_s, logvar_s]`.
    pub fn from_raw(raw: &Tensor, content_dim: usize, style_dim: usize) -> Result<Self> {
        let mut parts = raw.split_cols(&[content_dim, content_dim, style_dim, style_dim])?;
        let clamp = |t: &Tensor| t.map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        let style_log_var = clamp(&parts.pop().unwrap());
        let style_mean = parts.pop().unwrap();
        let content_log_var = clamp(&parts.pop().unwrap());
        let content_mean = parts.pop().unwrap();
        Ok(Posteriors {
            content_mean,
            content_log_var,
            style_mean,
            style_log_var,
        })
    }

    pub fn rows(&self) -> usize {
        self.content_mean.rows()
    }

    pub fn content(&self, row: usize) -> DiagGaussian {
        DiagGaussian::new(self.content_mean.row(row).to_vec(), self.content_log_var.row(row).to_vec())
            .expect("encoder outputs are finite")
    }

    pub fn style(&self, row: usize) -> DiagGaussian {
        DiagGaussian::new(self.style_mean.row(row).to_vec(), self.style_log_var.row(row).to_vec())
            .expect("encoder outputs are finite")
    }

    pub fn sample_content(&self, rng: &mut Rng) -> Tensor {
        reparameterize(&self.content_mean, &self.content_log_var, rng).0
    }

    pub fn sample_style(&self, rng: &mut Rng) -> Tensor {
        reparameterize(&self.style_mean, &self.style_log_var, rng).0
    }
}

/// `mean + exp(log_var / 2) ⊙ ε`; also returns the noise `ε`.
pub fn reparameterize(mean: &Tensor, log_var: &Tensor, rng: &mut Rng) -> (Tensor, Tensor) {
    let noise = standard_normal(mean.shape(), rng);
    let mut z = mean.clone();
    for ((zi, &lv), &e) in z.data_mut().iter_mut().zip(log_var.data()).zip(noise.data()) {
        *zi += (0.5 * lv).exp() * e;
    }
    (z, noise)
}

pub fn standard_normal(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_shape_vec(shape.to_vec(), rng.normals(n)).expect("shape matches length")
}

/// `A_i`, `B_i` per modality and the data discriminator `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorEnsemble {
    pub a: Vec<Mlp>,
    pub b: Vec<Mlp>,
    pub c: Mlp,
}

/// Baseline `(M + 1)`-way discriminator over `(x_1..x_M, s_1..s_M, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDiscriminator {
    pub net: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Discriminators {
    Factorized(DiscriminatorEnsemble),
    Joint(JointDiscriminator),
}

/// Where the target style code comes from when translating.
#[derive(Debug, Clone, Copy)]
pub enum StyleSource<'a> {
    Prior,
    Provided(&'a Tensor),
}

/// Disjoint borrows of a model's networks and parameter stores.
pub struct ModelParts<'a> {
    pub spec: &'a ModelSpec,
    pub encoders: &'a [Mlp],
    pub decoders: &'a [Mlp],
    pub discriminators: &'a Discriminators,
    pub generator: &'a mut ParamStore,
    pub discriminator: &'a mut ParamStore,
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    encoders: Vec<Mlp>,
    decoders: Vec<Mlp>,
    discriminators: Discriminators,
    generator: ParamStore,
    discriminator: ParamStore,
}

impl Model {
    /// Builds the networks and initializes their parameters from `rng`.
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::skeleton(spec)?;
        for net in model.encoders.iter().chain(&model.decoders) {
            net.register(&mut model.generator, rng)?;
        }
        let nets: Vec<&Mlp> = match &model.discriminators {
            Discriminators::Factorized(e) => e.a.iter().chain(&e.b).chain(std::iter::once(&e.c)).collect(),
            Discriminators::Joint(j) => vec![&j.net],
        };
        for net in nets {
            net.register(&mut model.discriminator, rng)?;
        }
        Ok(model)
    }

    /// Networks without parameters.
    fn skeleton(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (dc, ds) = (spec.content_dim, spec.style_dim);
        let m = spec.modalities();
        let gen_act = spec.generator_activation;
        let disc_act = spec.discriminator_activation;
        let mlp = |name: String, input: usize, hidden: &[usize], output: usize, act: Activation| -> Result<Mlp> {
            Ok(Mlp::new(name, MlpSpec::new(ModelSpec::widths(input, hidden, output), act)?))
        };
        let mut encoders = Vec::with_capacity(m);
        let mut decoders = Vec::with_capacity(m);
        for (i, &n) in spec.modality_dims.iter().enumerate() {
            encoders.push(mlp(format!("enc{i}"), n, &spec.encoder_hidden, spec.encoder_output_width(), gen_act)?);
            decoders.push(mlp(format!("dec{i}"), ds + dc, &spec.decoder_hidden, n, gen_act)?);
        }
        let total_x: usize = spec.modality_dims.iter().sum();
        let discriminators = match spec.discriminator_mode {
            DiscriminatorMode::Factorized => {
                let mut a = Vec::with_capacity(m);
                let mut b = Vec::with_capacity(m);
                for (i, &n) in spec.modality_dims.iter().enumerate() {
                    a.push(mlp(format!("a{i}"), n + ds + dc, &spec.discriminator_hidden, 1, disc_act)?);
                    b.push(mlp(format!("b{i}"), n + ds + dc, &spec.discriminator_hidden, 1, disc_act)?);
                }
                let c = mlp("c".into(), total_x, &spec.discriminator_hidden, 1, disc_act)?;
                Discriminators::Factorized(DiscriminatorEnsemble { a, b, c })
            }
            DiscriminatorMode::Joint => {
                let input = total_x + m * ds + dc;
                let net = mlp("joint".into(), input, &spec.discriminator_hidden, m + 1, disc_act)?;
                Discriminators::Joint(JointDiscriminator { net })
            }
        };
        Ok(Model {
            spec,
            encoders,
            decoders,
            discriminators,
            generator: ParamStore::new(),
            discriminator: ParamStore::new(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn modalities(&self) -> usize {
        self.spec.modalities()
    }

    pub fn encoder(&self, i: usize) -> Result<&Mlp> {
        self.encoders.get(i).ok_or_else(|| self.bad_index(i))
    }

    pub fn decoder(&self, i: usize) -> Result<&Mlp> {
        self.decoders.get(i).ok_or_else(|| self.bad_index(i))
    }

    pub fn discriminators(&self) -> &Discriminators {
        &self.discriminators
    }

    /// Encoder and decoder parameters.
    pub fn generator(&self) -> &ParamStore {
        &self.generator
    }

    pub fn generator_mut(&mut self) -> &mut ParamStore {
        &mut self.generator
    }

    pub fn discriminator(&self) -> &ParamStore {
        &self.discriminator
    }

    pub fn discriminator_mut(&mut self) -> &mut ParamStore {
        &mut self.discriminator
    }

    /// Networks and both stores at once, for training loops that read one
    /// store and write the other.
    pub fn parts_mut(&mut self) -> ModelParts<'_> {
        ModelParts {
            spec: &self.spec,
            encoders: &self.encoders,
            decoders: &self.decoders,
            discriminators: &self.discriminators,
            generator: &mut self.generator,
            discriminator: &mut self.discriminator,
        }
    }

    fn bad_index(&self, i: usize) -> Error {
        Error::invalid(format!("modality index {i} out of range for {} modalities", self.modalities()))
    }

    pub fn encode(&self, i: usize, x: &Tensor) -> Result<Posteriors> {
        let raw = self.encoder(i)?.predict(&self.generator, x)?;
        Posteriors::from_raw(&raw, self.spec.content_dim, self.spec.style_dim)
    }

    /// `x_i = G_i(s_i, c)` row by row.
    pub fn decode(&self, i: usize, style: &Tensor, content: &Tensor) -> Result<Tensor> {
        let dec = self.decoder(i)?;
        style.ensure_matrix(&format!("decoder {i} style"), self.spec.style_dim)?;
        content.ensure_matrix(&format!("decoder {i} content"), self.spec.content_dim)?;
        if style.rows() != content.rows() {
            return Err(Error::shape(format!("decoder {i} style rows"), &[content.rows()], &[style.rows()]));
        }
        dec.predict(&self.generator, &Tensor::hcat(&[style, content])?)
    }

    /// `rows` draws from the standard Gaussian priors `p(c)` and `p(s_i)`.
    pub fn sample_prior(&self, rows: usize, rng: &mut Rng) -> LatentSample {
        let content = standard_normal(&[rows, self.spec.content_dim], rng);
        let styles = (0..self.modalities())
            .map(|_| standard_normal(&[rows, self.spec.style_dim], rng))
            .collect();
        LatentSample { content, styles }
    }

    /// Translates `x_src` into modality `tgt` through `c ~ q(c | x_src)`.
    /// With `src == tgt` and the encoded style this is a reconstruction.
    pub fn cross_generate(
        &self,
        src: usize,
        x_src: &Tensor,
        tgt: usize,
        style: StyleSource<'_>,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        self.decoder(tgt)?;
        let post = self.encode(src, x_src)?;
        let c = post.sample_content(rng);
        match style {
            StyleSource::Prior => {
                let s = standard_normal(&[c.rows(), self.spec.style_dim], rng);
                self.decode(tgt, &s, &c)
            }
            StyleSource::Provided(s) => self.decode(tgt, s, &c),
        }
    }

    /// `rows` tuples from the decoder distribution; all modalities share `c`.
    pub fn joint_generate(&self, rows: usize, rng: &mut Rng) -> Result<Vec<Tensor>> {
        let z = self.sample_prior(rows, rng);
        (0..self.modalities())
            .map(|i| self.decode(i, &z.styles[i], &z.content))
            .collect()
    }

    pub fn ensemble(&self) -> Result<&DiscriminatorEnsemble> {
        match &self.discriminators {
            Discriminators::Factorized(e) => Ok(e),
            Discriminators::Joint(_) => Err(Error::invalid("model uses the joint discriminator")),
        }
    }

    fn check_tuple(&self, x: &[&Tensor], s: &[&Tensor], c: &Tensor) -> Result<usize> {
        let m = self.modalities();
        if x.len() != m || s.len() != m {
            return Err(Error::shape("(X, S) tuple", &[m, m], &[x.len(), s.len()]));
        }
        let rows = c.rows();
        for (i, t) in x.iter().chain(s).enumerate() {
            if t.rows() != rows {
                return Err(Error::shape(format!("tuple part {i} rows"), &[rows], &[t.rows()]));
            }
        }
        Ok(rows)
    }

    /// Raw factor logits for each row of `(X, S, c)`.
    pub fn factor_logits(&self, x: &[&Tensor], s: &[&Tensor], c: &Tensor) -> Result<Vec<FactorLogits>> {
        let rows = self.check_tuple(x, s, c)?;
        let e = self.ensemble()?;
        let store = &self.discriminator;
        let tc = e.c.predict(store, &Tensor::hcat(x)?)?;
        let mut out: Vec<FactorLogits> = (0..rows)
            .map(|r| FactorLogits {
                c: tc.data()[r],
                a: Vec::with_capacity(x.len()),
                b: Vec::with_capacity(x.len()),
            })
            .collect();
        for i in 0..x.len() {
            let input = Tensor::hcat(&[x[i], s[i], c])?;
            let ta = e.a[i].predict(store, &input)?;
            let tb = e.b[i].predict(store, &input)?;
            for (r, f) in out.iter_mut().enumerate() {
                f.a.push(ta.data()[r]);
                f.b.push(tb.data()[r]);
            }
        }
        Ok(out)
    }

    /// `log r_i` per row. The joint baseline reads them off as
    /// `logit_i − logit_{M+1}`.
    pub fn log_ratios(&self, x: &[&Tensor], s: &[&Tensor], c: &Tensor) -> Result<Vec<Vec<f64>>> {
        match &self.discriminators {
            Discriminators::Factorized(_) => Ok(self
                .factor_logits(x, s, c)?
                .iter()
                .map(assemble_log_ratios)
                .collect()),
            Discriminators::Joint(j) => {
                self.check_tuple(x, s, c)?;
                let mut parts: Vec<&Tensor> = x.to_vec();
                parts.extend_from_slice(s);
                parts.push(c);
                let t = j.net.predict(&self.discriminator, &Tensor::hcat(&parts)?)?;
                let m = self.modalities();
                Ok((0..t.rows())
                    .map(|r| {
                        let row = t.row(r);
                        (0..m).map(|i| row[i] - row[m]).collect()
                    })
                    .collect())
            }
        }
    }

    /// Writes `model.manifest`, `generator.params` and `discriminator.params`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = KvWriter::new();
        w.set("format", "mmali-model").set("version", 1);
        self.spec.to_kv(&mut w);
        w.write(&dir.join("model.manifest"))?;
        checkpoint::save_params(&self.generator, &dir.join("generator.params"))?;
        checkpoint::save_params(&self.discriminator, &dir.join("discriminator.params"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut doc = KvDoc::read(&dir.join("model.manifest"))?;
        let format: String = doc.require("format")?;
        let version: u32 = doc.require("version")?;
        if format != "mmali-model" || version != 1 {
            return Err(Error::format(
                doc.source(),
                format!("unsupported model manifest {format} v{version}"),
            ));
        }
        let spec = ModelSpec::from_kv(&mut doc)?;
        doc.finish()?;
        let mut model = Self::skeleton(spec)?;
        model.generator = checkpoint::load_params(&dir.join("generator.params"))?;
        model.discriminator = checkpoint::load_params(&dir.join("discriminator.params"))?;
        model.check_params()?;
        Ok(model)
    }

    /// Every network finds correctly shaped weights in its store.
    fn check_params(&self) -> Result<()> {
        let probe = |net: &Mlp, store: &ParamStore| -> Result<()> {
            net.predict(store, &Tensor::zeros(&[1, net.spec().input_width()])).map(|_| ())
        };
        for net in self.encoders.iter().chain(&self.decoders) {
            probe(net, &self.generator)?;
        }
        match &self.discriminators {
            Discriminators::Factorized(e) => {
                for net in e.a.iter().chain(&e.b).chain(std::iter::once(&e.c)) {
                    probe(net, &self.discriminator)?;
                }
            }
            Discriminators::Joint(j) => probe(&j.net, &self.discriminator)?,
        }
        Ok(())
    }
}
