//! Synthetic multimodal datasets, their on-disk format, and unpairing.

mod io;
mod ring;

pub use io::{load, load_manifest, save, DatasetManifest, GeneratorKind};
pub use ring::{generate_gaussian_ring, Affine2, Dataset, RingClassifier, RingConfig};

use crate::diffnet::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row-aligned observations of every modality.
///
/// `labels[i][r]` is the component that generated `x[i]`'s row `r`; on a
/// paired row all modalities share it. Unpaired rows keep their labels for
/// evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalBatch {
    pub x: Vec<Tensor>,
    pub labels: Option<Vec<Vec<usize>>>,
    pub paired: Vec<bool>,
}

impl MultimodalBatch {
    pub fn new(x: Vec<Tensor>, labels: Option<Vec<Vec<usize>>>, paired: Vec<bool>) -> Result<Self> {
        let batch = MultimodalBatch { x, labels, paired };
        batch.validate()?;
        Ok(batch)
    }

    /// All rows paired, no labels.
    pub fn paired(x: Vec<Tensor>) -> Result<Self> {
        let rows = x.first().map_or(0, |t| t.rows());
        Self::new(x, None, vec![true; rows])
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::invalid("a batch needs at least one modality"));
        }
        let rows = self.paired.len();
        for (i, t) in self.x.iter().enumerate() {
            if t.shape().len() != 2 || t.rows() != rows {
                return Err(Error::shape(format!("modality {i} rows"), &[rows], &t.shape()[..1]));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.x.len() {
                return Err(Error::shape("label columns", &[self.x.len()], &[labels.len()]));
            }
            for (i, l) in labels.iter().enumerate() {
                if l.len() != rows {
                    return Err(Error::shape(format!("modality {i} labels"), &[rows], &[l.len()]));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.paired.len()
    }

    pub fn modalities(&self) -> usize {
        self.x.len()
    }

    pub fn modality_dims(&self) -> Vec<usize> {
        self.x.iter().map(|t| t.cols()).collect()
    }

    pub fn paired_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&r| self.paired[r]).collect()
    }

    pub fn unpaired_rows(&self) -> Vec<usize> {
        (0..self.rows()).filter(|&r| !self.paired[r]).collect()
    }

    /// Labels of modality `i`; fails if the batch is unlabeled.
    pub fn labels_of(&self, i: usize) -> Result<&[usize]> {
        self.labels
            .as_ref()
            .and_then(|l| l.get(i))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("batch has no labels for modality {i}")))
    }

    pub fn select_rows(&self, idx: &[usize]) -> MultimodalBatch {
        MultimodalBatch {
            x: self.x.iter().map(|t| t.select_rows(idx)).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|ls| ls.iter().map(|l| idx.iter().map(|&r| l[r]).collect()).collect()),
            paired: idx.iter().map(|&r| self.paired[r]).collect(),
        }
    }

    /// Only the paired rows.
    pub fn paired_only(&self) -> MultimodalBatch {
        self.select_rows(&self.paired_rows())
    }
}

/// Marks `⌊fraction · rows⌋` random rows unpaired and destroys their
/// cross-modal alignment by shuffling each modality independently among them.
pub fn unpair(batch: &MultimodalBatch, fraction: f64, rng: &mut Rng) -> Result<MultimodalBatch> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("unpair fraction {fraction} outside [0, 1]")));
    }
    let count = (fraction * batch.rows() as f64).floor() as usize;
    let mut out = batch.clone();
    if count == 0 {
        return Ok(out);
    }
    let mut chosen = rng.permutation(batch.rows());
    chosen.truncate(count);
    chosen.sort_unstable();
    for &r in &chosen {
        out.paired[r] = false;
    }
    for i in 0..batch.modalities() {
        let perm = rng.permutation(count);
        for (k, &dst) in chosen.iter().enumerate() {
            let src = chosen[perm[k]];
            out.x[i].row_mut(dst).copy_from_slice(batch.x[i].row(src));
            if let (Some(dl), Some(sl)) = (out.labels.as_mut(), batch.labels.as_ref()) {
                dl[i][dst] = sl[i][src];
            }
        }
    }
    Ok(out)
}
