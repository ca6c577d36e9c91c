//! The `mmali` command line: data generation, training, evaluation, oracle
//! checks and metric export.
//!
//! Exit codes: 0 success, 1 failed check, 2 invalid flags or config, 3 I/O or
//! parse failure, 4 non-finite loss, 5 manifest mismatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{self, generate_gaussian_ring, Affine2, RingConfig};
use crate::error::{Error, Result};
use crate::eval::{self, CodeSelector, CoherenceReport};
use crate::gaussians::MeanFunction;
use crate::kv::{KvDoc, KvWriter};
use crate::model::Model;
use crate::oracles::{self, Suite};
use crate::rng::Rng;
use crate::training::{self, MetricsLog, TrainConfig, TrainSinks};

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;
pub const EXIT_MISMATCH: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "mmali", version, about = "Multimodal adversarially learned inference at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multimodal dataset.
    GenerateData(GenerateArgs),
    /// Train from a key = value run config.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run the built-in verification oracles.
    OracleCheck(OracleArgs),
    /// Split a metrics CSV into one series file per metric and seed.
    ExportMetrics(ExportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "gaussian-ring")]
    pub kind: String,
    #[arg(long, default_value_t = 8)]
    pub components: usize,
    #[arg(long, default_value_t = 2)]
    pub modalities: usize,
    #[arg(long, default_value_t = 10_000)]
    pub train_rows: usize,
    #[arg(long, default_value_t = 2_000)]
    pub test_rows: usize,
    #[arg(long, default_value_t = 0.1)]
    pub cluster_sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config: TrainConfig keys plus `dataset`, `out_dir`, `eval_joint_draws`.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub paired_fraction: Option<f64>,
    #[arg(long)]
    pub discriminator_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics CSV to append rows to.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub joint_draws: usize,
    /// `arithmetic`, `geometric` or `both`.
    #[arg(long, default_value = "both")]
    pub mean_function: String,
    #[arg(long)]
    pub cca: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iteration stamped on CSV rows.
    #[arg(long, default_value_t = 0)]
    pub iteration: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Comma-separated suites: grad, gaussian, factorization.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// A metrics CSV, or a directory whose `*.csv` files are all read.
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Maps an error to its documented exit code.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::Diverged { .. } | Error::NonFinite(_) => EXIT_DIVERGED,
        Error::ManifestMismatch(_) => EXIT_MISMATCH,
        Error::Shape { .. } | Error::StaleCache(_) | Error::Numerical(_) => EXIT_CHECK_FAILED,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Runs one command; `Ok` carries a non-error exit code (0 or a failed check).
pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::GenerateData(a) => generate_data(&a).map(|_| 0),
        Command::Train(a) => train(&a).map(|_| 0),
        Command::Eval(a) => eval_cmd(&a).map(|_| 0),
        Command::OracleCheck(a) => oracle_check(&a),
        Command::ExportMetrics(a) => export_metrics(&a).map(|_| 0),
    }
}

pub fn generate_data(a: &GenerateArgs) -> Result<()> {
    if a.kind != "gaussian-ring" {
        return Err(Error::Config(format!("unknown generator kind {}", a.kind)));
    }
    if a.components < 2 {
        return Err(Error::Config(format!("--components must be at least 2, got {}", a.components)));
    }
    if a.modalities == 0 {
        return Err(Error::Config("--modalities must be positive".into()));
    }
    let config = RingConfig {
        components: a.components,
        train_rows: a.train_rows,
        test_rows: a.test_rows,
        cluster_sigma: a.cluster_sigma,
        noise_sigma: a.noise_sigma,
        transforms: (0..a.modalities).map(Affine2::quarter_turns).collect(),
        shared_instance: false,
        seed: a.seed,
    };
    let dataset = generate_gaussian_ring(&config).map_err(|e| Error::Config(e.to_string()))?;
    data::save(&dataset, &a.out)?;
    println!(
        "wrote {} ({} modalities, K = {}, {} train / {} test rows) to {}",
        dataset.manifest.name,
        dataset.manifest.modalities(),
        dataset.manifest.components,
        dataset.manifest.train_rows,
        dataset.manifest.test_rows,
        a.out.display()
    );
    Ok(())
}

/// Everything a `train` run reads from its config file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub eval_joint_draws: usize,
}

impl RunConfig {
    /// Reads `path`; flags in `overrides` replace file keys. Relative paths
    /// resolve against the config file's directory.
    pub fn load(path: &Path, overrides: &[(&str, String)]) -> Result<Self> {
        let mut doc = KvDoc::read(path)?;
        for (k, v) in overrides {
            doc.override_value(k, v);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let dataset = resolve(doc.require::<String>("dataset")?);
        let out_dir = resolve(doc.require::<String>("out_dir")?);
        let eval_joint_draws = doc.take("eval_joint_draws")?.unwrap_or(10_000);
        let train = TrainConfig::from_kv(&mut doc)?;
        doc.finish()?;
        Ok(RunConfig {
            train,
            dataset,
            out_dir,
            eval_joint_draws,
        })
    }

    pub fn to_kv(&self, w: &mut KvWriter) {
        w.set("dataset", self.dataset.display())
            .set("out_dir", self.out_dir.display())
            .set("eval_joint_draws", self.eval_joint_draws);
        self.train.to_kv(w);
    }
}

pub fn train(a: &TrainArgs) -> Result<PathBuf> {
    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(d) = &a.dataset {
        overrides.push(("dataset", d.display().to_string()));
    }
    if let Some(o) = &a.out {
        overrides.push(("out_dir", o.display().to_string()));
    }
    if let Some(s) = a.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(n) = a.iterations {
        overrides.push(("iterations", n.to_string()));
    }
    if let Some(p) = a.paired_fraction {
        overrides.push(("paired_fraction", p.to_string()));
    }
    if let Some(m) = &a.discriminator_mode {
        overrides.push(("discriminator_mode", m.clone()));
    }
    let run = RunConfig::load(&a.config, &overrides)?;
    if !run.dataset.join("manifest.txt").is_file() {
        return Err(Error::io(
            run.dataset.join("manifest.txt"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset manifest not found"),
        ));
    }
    std::fs::create_dir_all(&run.out_dir).map_err(|e| Error::io(&run.out_dir, e))?;
    let dataset = data::load(&run.dataset)?;
    if dataset.manifest.modality_dims != run.train.modality_dims {
        return Err(Error::ManifestMismatch(format!(
            "config modality_dims {:?} but dataset {} has {:?}",
            run.train.modality_dims,
            run.dataset.display(),
            dataset.manifest.modality_dims
        )));
    }
    let mut w = KvWriter::new();
    run.to_kv(&mut w);
    w.write(&run.out_dir.join("run.config"))?;
    let sinks = TrainSinks {
        checkpoint_dir: Some(run.out_dir.clone()),
        metrics_csv: Some(run.out_dir.join("metrics.csv")),
    };
    match training::train(&run.train, &dataset.train, &sinks) {
        Ok(out) => {
            println!(
                "trained {} iterations; final checkpoint {}",
                run.train.iterations,
                training::final_checkpoint(&run.out_dir).display()
            );
            if let Some(last) = out.reports.last() {
                for (name, v) in &last.losses.0 {
                    println!("  {name} = {v:.4}");
                }
            }
            Ok(training::final_checkpoint(&run.out_dir))
        }
        Err(e @ Error::Diverged { .. }) => {
            let path = run.out_dir.join("diverged.txt");
            std::fs::write(&path, format!("{e}\n")).map_err(|io| Error::io(&path, io))?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub coherence: CoherenceReport,
    pub probes: BTreeMap<String, f64>,
    /// Mean CCA score of joint generations and of held-out data pairs.
    pub cca_generated: Option<f64>,
    pub cca_test: Option<f64>,
}

impl EvalReport {
    /// Named scalars for the metrics CSV.
    pub fn scalars(&self, mean_functions: &[MeanFunction]) -> Vec<(String, f64)> {
        let c = &self.coherence;
        let mut out = vec![("joint_coherence".to_string(), c.joint)];
        for (i, row) in c.cross.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.push((format!("cross_coherence_{i}_{j}"), *v));
            }
        }
        for mf in mean_functions {
            let values = match mf {
                MeanFunction::Arithmetic => &c.synergy_arithmetic,
                MeanFunction::Geometric => &c.synergy_geometric,
            };
            for (i, v) in values.iter().enumerate() {
                out.push((format!("synergy_{}_{i}", mf.name()), *v));
            }
        }
        for (k, v) in &self.probes {
            out.push((format!("probe_{k}"), *v));
        }
        if let Some(v) = self.cca_generated {
            out.push(("cca_generated".into(), v));
        }
        if let Some(v) = self.cca_test {
            out.push(("cca_test".into(), v));
        }
        out
    }
}

/// Coherences, latent probes for every modality and code, and optionally
/// CCA scores of the first two modalities.
pub fn evaluate(
    model: &Model,
    dataset: &data::Dataset,
    joint_draws: usize,
    with_cca: bool,
    seed: u64,
) -> Result<EvalReport> {
    let classifier = dataset
        .manifest
        .ring()
        .ok_or_else(|| Error::invalid("dataset has no analytic classifier"))?
        .classifier();
    let mut rng = Rng::stream(seed, 30);
    let coherence = eval::coherence_report(model, &dataset.test, &classifier, joint_draws, &mut rng)?;
    let mut probes = BTreeMap::new();
    let k = dataset.manifest.components;
    for i in 0..model.modalities() {
        let mut selectors = vec![CodeSelector::Content(i)];
        if model.spec().style_dim > 0 {
            selectors.extend([CodeSelector::Style(i), CodeSelector::Both(i)]);
        }
        for s in selectors {
            probes.insert(s.name(), eval::latent_probe(model, &dataset.train, &dataset.test, s, k, seed)?);
        }
    }
    let (mut cca_generated, mut cca_test) = (None, None);
    if with_cca {
        if model.modalities() < 2 {
            return Err(Error::invalid("CCA needs two modalities"));
        }
        let paired = dataset.train.paired_only();
        let (a, b) = (&paired.x[0], &paired.x[1]);
        let comps = eval::default_components(a.cols(), b.cols());
        let generated = model.joint_generate(dataset.test.rows(), &mut rng)?;
        cca_generated = Some(eval::cca_correlation((a, b), (&generated[0], &generated[1]), comps)?);
        cca_test = Some(eval::cca_correlation((a, b), (&dataset.test.x[0], &dataset.test.x[1]), comps)?);
    }
    Ok(EvalReport {
        coherence,
        probes,
        cca_generated,
        cca_test,
    })
}

fn parse_mean_functions(s: &str) -> Result<Vec<MeanFunction>> {
    match s {
        "both" => Ok(vec![MeanFunction::Arithmetic, MeanFunction::Geometric]),
        other => MeanFunction::parse(other)
            .map(|m| vec![m])
            .map_err(|e| Error::Config(e.to_string())),
    }
}

pub fn eval_cmd(a: &EvalArgs) -> Result<EvalReport> {
    let mean_functions = parse_mean_functions(&a.mean_function)?;
    if a.joint_draws == 0 {
        return Err(Error::Config("--joint-draws must be positive".into()));
    }
    let model = Model::load(&a.checkpoint)?;
    let manifest = data::load_manifest(&a.dataset)?;
    if manifest.modality_dims != model.spec().modality_dims {
        return Err(Error::ManifestMismatch(format!(
            "checkpoint modality dims {:?}, dataset {:?}",
            model.spec().modality_dims,
            manifest.modality_dims
        )));
    }
    let dataset = data::load(&a.dataset)?;
    let report = evaluate(&model, &dataset, a.joint_draws, a.cca, a.seed)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::invalid(e.to_string()))?;
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| Error::io(p, e))?,
        None => println!("{json}"),
    }
    if let Some(csv) = &a.csv {
        let mut log = MetricsLog::new();
        for (name, v) in report.scalars(&mean_functions) {
            log.push(a.iteration, a.seed, name, v);
        }
        log.append_csv(csv)?;
    }
    Ok(report)
}

pub fn oracle_check(a: &OracleArgs) -> Result<u8> {
    let mut only = Vec::new();
    for name in &a.only {
        only.push(Suite::parse(name).ok_or_else(|| Error::Config(format!("unknown suite {name}")))?);
    }
    let results = oracles::run(&only, a.seed, oracles::standard_assembler)?;
    let mut failed = 0;
    for r in &results {
        println!(
            "{} [{}] {}: {:.3e} (tolerance {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.name,
            r.value,
            r.tolerance
        );
        failed += usize::from(!r.passed);
    }
    if let Some(p) = &a.json {
        let json = serde_json::to_string_pretty(&results).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(p, json + "\n").map_err(|e| Error::io(p, e))?;
    }
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { 0 } else { EXIT_CHECK_FAILED })
}

fn read_metrics(path: &Path) -> Result<MetricsLog> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(MetricsLog::new());
    }
    MetricsLog::parse_csv(&bytes, path)
}

/// Writes `{name}.seed{seed}.tsv` files with `iteration<TAB>value` lines;
/// returns the paths written.
pub fn export_metrics(a: &ExportArgs) -> Result<Vec<PathBuf>> {
    let mut log = MetricsLog::new();
    if a.csv.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&a.csv)
            .map_err(|e| Error::io(&a.csv, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in files {
            log.rows.extend(read_metrics(&f)?.rows);
        }
    } else {
        log = read_metrics(&a.csv)?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut series: BTreeMap<(String, u64), String> = BTreeMap::new();
    for r in &log.rows {
        series
            .entry((r.name.clone(), r.seed))
            .or_default()
            .push_str(&format!("{}\t{}\n", r.iteration, r.value));
    }
    let mut written = Vec::with_capacity(series.len());
    for ((name, seed), body) in series {
        let path = a.out.join(format!("{name}.seed{seed}.tsv"));
        std::fs::write(&path, format!("iteration\tvalue\n{body}")).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    println!("wrote {} series to {}", written.len(), a.out.display());
    Ok(written)
}
