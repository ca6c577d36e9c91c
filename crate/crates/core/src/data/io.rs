//! Dataset directories: `manifest.txt` plus flat little-endian binaries.
//!
//! Per split (`train`, `test`) and modality `i`:
//! `{split}.x{i}.f64` (rows × n_i doubles), `{split}.labels.u32` (rows × M
//! labels, row-major), `{split}.paired.u8` (one byte per row). The manifest
//! records shapes and a SHA-256 per file.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::ring::{Affine2, Dataset, RingConfig};
use super::MultimodalBatch;
use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::kv::{join_list, KvDoc, KvWriter};

const FORMAT: &str = "mmali-dataset";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    GaussianRing(RingConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub modality_dims: Vec<usize>,
    pub components: usize,
    pub generator: GeneratorKind,
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
}

impl DatasetManifest {
    pub fn modalities(&self) -> usize {
        self.modality_dims.len()
    }

    /// The analytic ring configuration, when the data came from one.
    pub fn ring(&self) -> Option<&RingConfig> {
        match &self.generator {
            GeneratorKind::GaussianRing(c) => Some(c),
        }
    }

    fn write_kv(&self, w: &mut KvWriter) {
        w.set("format", FORMAT)
            .set("version", VERSION)
            .set("name", &self.name)
            .set("modalities", self.modalities())
            .set("modality_dims", join_list(&self.modality_dims))
            .set("components", self.components)
            .set("seed", self.seed)
            .set("train_rows", self.train_rows)
            .set("test_rows", self.test_rows);
        match &self.generator {
            GeneratorKind::GaussianRing(c) => {
                w.set("generator", "gaussian_ring")
                    .set("cluster_sigma", c.cluster_sigma)
                    .set("noise_sigma", c.noise_sigma)
                    .set("shared_instance", c.shared_instance);
                for (i, t) in c.transforms.iter().enumerate() {
                    w.set(&format!("transform{i}"), t.encode());
                }
            }
        }
    }

    fn read_kv(doc: &mut KvDoc) -> Result<Self> {
        let format: String = doc.require("format")?;
        let version: u32 = doc.require("version")?;
        if format != FORMAT || version != VERSION {
            return Err(Error::format(doc.source(), format!("unsupported dataset {format} v{version}")));
        }
        let name: String = doc.require("name")?;
        let modalities: usize = doc.require("modalities")?;
        let modality_dims: Vec<usize> = doc.require_list("modality_dims")?;
        if modality_dims.len() != modalities {
            return Err(Error::format(
                doc.source(),
                format!("modalities = {modalities} but {} dims listed", modality_dims.len()),
            ));
        }
        let components: usize = doc.require("components")?;
        let seed: u64 = doc.require("seed")?;
        let train_rows: usize = doc.require("train_rows")?;
        let test_rows: usize = doc.require("test_rows")?;
        let kind: String = doc.require("generator")?;
        let generator = match kind.as_str() {
            "gaussian_ring" => {
                let mut transforms = Vec::with_capacity(modalities);
                for i in 0..modalities {
                    let text: String = doc.require(&format!("transform{i}"))?;
                    transforms.push(Affine2::decode(&text).map_err(|e| Error::format(doc.source(), e.to_string()))?);
                }
                GeneratorKind::GaussianRing(RingConfig {
                    components,
                    train_rows,
                    test_rows,
                    cluster_sigma: doc.require("cluster_sigma")?,
                    noise_sigma: doc.require("noise_sigma")?,
                    transforms,
                    shared_instance: doc.require("shared_instance")?,
                    seed,
                })
            }
            other => return Err(Error::format(doc.source(), format!("unknown generator {other}"))),
        };
        Ok(DatasetManifest {
            name,
            modality_dims,
            components,
            generator,
            seed,
            train_rows,
            test_rows,
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], w: &mut KvWriter) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    w.set(&format!("sha256.{name}"), sha256_hex(bytes));
    Ok(())
}

/// Writes `dataset` under `dir`, creating it if needed.
pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = KvWriter::new();
    dataset.manifest.write_kv(&mut w);
    for (split, batch) in [("train", &dataset.train), ("test", &dataset.test)] {
        if batch.modality_dims() != dataset.manifest.modality_dims {
            return Err(Error::ManifestMismatch(format!(
                "{split} split has dims {:?}, manifest {:?}",
                batch.modality_dims(),
                dataset.manifest.modality_dims
            )));
        }
        for (i, x) in batch.x.iter().enumerate() {
            let bytes: Vec<u8> = x.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            write_file(dir, &format!("{split}.x{i}.f64"), &bytes, &mut w)?;
        }
        let labels = batch
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{split} split has no labels")))?;
        let mut bytes = Vec::with_capacity(batch.rows() * batch.modalities() * 4);
        for r in 0..batch.rows() {
            for l in labels {
                bytes.extend_from_slice(&(l[r] as u32).to_le_bytes());
            }
        }
        write_file(dir, &format!("{split}.labels.u32"), &bytes, &mut w)?;
        let paired: Vec<u8> = batch.paired.iter().map(|&p| p as u8).collect();
        write_file(dir, &format!("{split}.paired.u8"), &paired, &mut w)?;
    }
    w.write(&dir.join("manifest.txt"))
}

fn read_checked(dir: &Path, name: &str, expected_len: usize, shape: &[usize], doc: &mut KvDoc) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != expected_len {
        return Err(Error::format(
            &path,
            format!(
                "expected shape {shape:?} ({expected_len} bytes), found {} bytes",
                bytes.len()
            ),
        ));
    }
    let want: String = doc.require(&format!("sha256.{name}"))?;
    if sha256_hex(&bytes) != want {
        return Err(Error::format(&path, "checksum mismatch"));
    }
    Ok(bytes)
}

/// Reads the manifest only.
pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let mut doc = KvDoc::read(&dir.join("manifest.txt"))?;
    DatasetManifest::read_kv(&mut doc)
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let mut doc = KvDoc::read(&dir.join("manifest.txt"))?;
    let manifest = DatasetManifest::read_kv(&mut doc)?;
    let m = manifest.modalities();
    let mut splits = Vec::with_capacity(2);
    for (split, rows) in [("train", manifest.train_rows), ("test", manifest.test_rows)] {
        let mut x = Vec::with_capacity(m);
        for (i, &n) in manifest.modality_dims.iter().enumerate() {
            let bytes = read_checked(dir, &format!("{split}.x{i}.f64"), rows * n * 8, &[rows, n], &mut doc)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            x.push(Tensor::from_shape_vec(vec![rows, n], data)?);
        }
        let bytes = read_checked(dir, &format!("{split}.labels.u32"), rows * m * 4, &[rows, m], &mut doc)?;
        let mut labels = vec![Vec::with_capacity(rows); m];
        for (k, c) in bytes.chunks_exact(4).enumerate() {
            let l = u32::from_le_bytes(c.try_into().unwrap()) as usize;
            if l >= manifest.components {
                return Err(Error::format(
                    dir.join(format!("{split}.labels.u32")),
                    format!("label {l} out of range for {} components", manifest.components),
                ));
            }
            labels[k % m].push(l);
        }
        let bytes = read_checked(dir, &format!("{split}.paired.u8"), rows, &[rows], &mut doc)?;
        let paired = bytes.iter().map(|&b| b != 0).collect();
        splits.push(MultimodalBatch::new(x, Some(labels), paired)?);
    }
    doc.finish()?;
    let test = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset { manifest, train, test })
}
