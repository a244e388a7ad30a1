//! Datasets of CSI samples, their on-disk format, and train/val/test splits.

mod format;
mod split;

pub use format::{load, read_from, save, write_to, MAGIC, VERSION};
pub use split::{split_random, split_spatial, Axis, Region, Side, SpatialRequest, SplitManifest, SplitScheme};

use crate::error::{Error, Result};
use crate::types::{CsiSample, Label2D, Origin};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub n_subcarriers: usize,
    pub n_ap: usize,
    pub n_rx: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    /// Free-text note on where the data came from. Not persisted by the binary format.
    pub created_from: String,
}

impl DatasetMeta {
    /// Feature dimension of a vectorised sample, `M · n_ap · n_rx · 2`.
    pub fn feature_dim(&self) -> usize {
        self.n_subcarriers * self.n_ap * self.n_rx * 2
    }

    fn matches(&self, sample: &CsiSample) -> bool {
        let t = sample.tensor();
        t.n_ap() == self.n_ap && t.n_rx() == self.n_rx && t.n_subcarriers() == self.n_subcarriers
    }

    pub fn same_shape(&self, other: &DatasetMeta) -> bool {
        self.n_subcarriers == other.n_subcarriers && self.n_ap == other.n_ap && self.n_rx == other.n_rx
    }
}

/// Ordered collection of samples sharing one tensor shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    meta: DatasetMeta,
    samples: Vec<CsiSample>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, samples: Vec<CsiSample>) -> Result<Self> {
        if meta.n_subcarriers < 2 || meta.n_ap == 0 || meta.n_rx == 0 {
            return Err(Error::InvalidDimension(format!(
                "dataset shape {} x {} x {} is degenerate",
                meta.n_ap, meta.n_rx, meta.n_subcarriers
            )));
        }
        if let Some(i) = samples.iter().position(|s| !meta.matches(s)) {
            return Err(Error::InvalidDimension(format!(
                "sample {i} does not match the dataset shape {} x {} x {}",
                meta.n_ap, meta.n_rx, meta.n_subcarriers
            )));
        }
        Ok(Self { meta, samples })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn samples(&self) -> &[CsiSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<CsiSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label2D> {
        self.samples.iter().map(|s| s.label()).collect()
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.samples.iter().filter(|s| s.origin() == origin).count()
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples.get(i).cloned().ok_or_else(|| {
                    Error::InvalidArgument(format!("index {i} out of range for {} samples", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.meta.clone(), samples)
    }

    /// Same metadata, different samples.
    pub fn with_samples(&self, samples: Vec<CsiSample>) -> Result<Dataset> {
        Dataset::new(self.meta.clone(), samples)
    }

    pub fn push(&mut self, sample: CsiSample) -> Result<()> {
        if !self.meta.matches(&sample) {
            return Err(Error::InvalidDimension("sample shape differs from dataset".into()));
        }
        self.samples.push(sample);
        Ok(())
    }
}
