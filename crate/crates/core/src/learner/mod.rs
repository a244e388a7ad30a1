//! Fully connected localisation network trained on vectorised CSI.
//!
//! The network maps a standardised feature vector through `hidden_layers`
//! rectified affine layers to a linear 2-output head. The first
//! `feature_extractor_depth` affine layers form the feature extractor; the
//! rest form the head. Outputs are de-standardised with fixed label
//! statistics, so every loss reported here is in m².

mod checkpoint;
mod difficulty;
mod train;

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use difficulty::{augment_selected, easiest, rank_difficulty, selection_factor};
pub use train::{train, transfer, TrainTrace, TransferMode};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{CsiSample, Label2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub dropout_p: f64,
    /// Leading affine layers that make up the feature extractor.
    pub feature_extractor_depth: usize,
}

impl MlpConfig {
    /// 3 × 128 with a two-layer feature extractor.
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 3,
            hidden_width: 128,
            dropout_p: 0.2,
            feature_extractor_depth: 2,
        }
    }

    /// 4 × 512 with a two-layer feature extractor.
    pub fn full_scale(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 4,
            hidden_width: 512,
            dropout_p: 0.2,
            feature_extractor_depth: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.input_dim == 0 {
            bad.push("input_dim must be >= 1".to_string());
        }
        if self.hidden_width == 0 && self.hidden_layers > 0 {
            bad.push("hidden_width must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            bad.push(format!("dropout_p must lie in [0, 1) (got {})", self.dropout_p));
        }
        if self.feature_extractor_depth > self.hidden_layers {
            bad.push(format!(
                "feature_extractor_depth {} exceeds hidden_layers {}",
                self.feature_extractor_depth, self.hidden_layers
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// `(fan_in, fan_out)` of each affine layer, input to head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(2);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.epochs == 0 {
            bad.push("epochs must be >= 1".to_string());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bad.push(format!("learning_rate must be >= 0 (got {})", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bad.push(format!("weight_decay must be >= 0 (got {})", self.weight_decay));
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be >= 1".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

/// Real parts of each link, then its imaginary parts; links AP-major.
pub fn vectorize(sample: &CsiSample) -> Vec<f64> {
    let t = sample.tensor();
    let mut out = Vec::with_capacity(t.n_ap() * t.n_rx() * t.n_subcarriers() * 2);
    for link in t.links() {
        out.extend(link.as_slice().iter().map(|v| v.re));
        out.extend(link.as_slice().iter().map(|v| v.im));
    }
    out
}

/// Per-dimension feature statistics and per-axis label statistics from a
/// training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_mean: [f64; 2],
    pub label_std: [f64; 2],
}

fn safe_std(var: f64) -> f64 {
    let s = var.max(0.0).sqrt();
    if s > 1e-12 && s.is_finite() {
        s
    } else {
        1.0
    }
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            feature_mean: vec![0.0; dim],
            feature_std: vec![1.0; dim],
            label_mean: [0.0; 2],
            label_std: [1.0; 2],
        }
    }

    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Empty("cannot fit normalisation on an empty dataset".into()));
        }
        let d = dataset.meta().feature_dim();
        let n = dataset.len() as f64;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for s in dataset.samples() {
            for (k, v) in vectorize(s).into_iter().enumerate() {
                mean[k] += v;
                sq[k] += v * v;
            }
        }
        let std = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                safe_std(s / n - *m * *m)
            })
            .collect();
        let labels = dataset.labels();
        let lx: Vec<f64> = labels.iter().map(|l| l.x).collect();
        let ly: Vec<f64> = labels.iter().map(|l| l.y).collect();
        let (mx, my) = (crate::stats::mean(&lx), crate::stats::mean(&ly));
        Ok(Self {
            feature_mean: mean,
            feature_std: std,
            label_mean: [mx, my],
            label_std: [safe_std(crate::stats::std_dev(&lx).powi(2)), safe_std(crate::stats::std_dev(&ly).powi(2))],
        })
    }

    fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: MlpConfig,
    norm: Normalization,
    params: Vec<f64>,
}

/// Fan-in scaled uniform weights, zero biases.
fn init_params(config: &MlpConfig, rng: &RngStream) -> Vec<f64> {
    let mut g = rng.generator();
    let mut params = Vec::with_capacity(config.n_params());
    for (fan_in, fan_out) in config.layer_shapes() {
        let bound = (6.0 / fan_in as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| g.random_range(-bound..bound)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    params
}

impl Model {
    pub fn new(config: MlpConfig, norm: Normalization, rng: &RngStream) -> Result<Self> {
        config.validate()?;
        if norm.feature_mean.len() != config.input_dim || norm.feature_std.len() != config.input_dim {
            return Err(Error::InvalidDimension(format!(
                "normalisation covers {} features, network expects {}",
                norm.feature_mean.len(),
                config.input_dim
            )));
        }
        let params = init_params(&config, rng);
        Ok(Self { config, norm, params })
    }

    pub fn from_parts(config: MlpConfig, norm: Normalization, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.n_params() {
            return Err(Error::InvalidDimension(format!(
                "expected {} parameters, got {}",
                config.n_params(),
                params.len()
            )));
        }
        if norm.feature_mean.len() != config.input_dim || norm.feature_std.len() != config.input_dim {
            return Err(Error::InvalidDimension("normalisation size differs from input_dim".into()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite model parameter".into()));
        }
        Ok(Self { config, norm, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Parameter offsets `(weights, biases, end)` per layer.
    fn offsets(&self) -> Vec<(usize, usize, usize)> {
        let mut at = 0;
        self.config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let w = at;
                let b = w + i * o;
                at = b + o;
                (w, b, at)
            })
            .collect()
    }

    /// Flat-parameter range of the feature extractor.
    pub fn feature_range(&self) -> std::ops::Range<usize> {
        let depth = self.config.feature_extractor_depth;
        let end = if depth == 0 { 0 } else { self.offsets()[depth - 1].2 };
        0..end
    }

    pub fn feature_params(&self) -> &[f64] {
        &self.params[self.feature_range()]
    }

    pub fn head_params(&self) -> &[f64] {
        &self.params[self.feature_range().end..]
    }

    /// Replace the head with fresh weights drawn from `rng`.
    pub fn reinit_head(&mut self, rng: &RngStream) {
        let fresh = init_params(&self.config, rng);
        let start = self.feature_range().end;
        self.params[start..].copy_from_slice(&fresh[start..]);
    }

    pub fn check_input(&self, dataset: &Dataset) -> Result<()> {
        let d = dataset.meta().feature_dim();
        if d != self.config.input_dim {
            return Err(Error::InvalidDimension(format!(
                "dataset features have dimension {d}, model expects {}",
                self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Standardised feature matrix, one column per sample.
    fn features(&self, samples: &[CsiSample]) -> DMatrix<f64> {
        let d = self.config.input_dim;
        let mut x = DMatrix::zeros(d, samples.len());
        for (j, s) in samples.iter().enumerate() {
            x.column_mut(j).copy_from_slice(&self.norm.apply(&vectorize(s)));
        }
        x
    }

    fn layer(&self, l: usize) -> (DMatrixView<'_, f64>, &[f64]) {
        let (fan_in, fan_out) = self.config.layer_shapes()[l];
        let (w, b, end) = self.offsets()[l];
        (
            DMatrixView::from_slice(&self.params[w..b], fan_out, fan_in),
            &self.params[b..end],
        )
    }

    /// Forward pass in evaluation mode for one standardised feature vector,
    /// returning standardised outputs. Plain loops keep it independent of
    /// how samples are grouped.
    fn forward_one(&self, x: &[f64]) -> [f64; 2] {
        let shapes = self.config.layer_shapes();
        let offsets = self.offsets();
        let mut a = x.to_vec();
        for (l, ((fan_in, fan_out), (w, b, _))) in shapes.iter().zip(&offsets).enumerate() {
            let mut z = self.params[*b..*b + fan_out].to_vec();
            for (k, &ak) in a.iter().enumerate().take(*fan_in) {
                if ak == 0.0 {
                    continue;
                }
                let col = &self.params[w + k * fan_out..w + (k + 1) * fan_out];
                for (zi, wi) in z.iter_mut().zip(col) {
                    *zi += wi * ak;
                }
            }
            if l + 1 < shapes.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        [a[0], a[1]]
    }

    fn destandardize(&self, o: [f64; 2]) -> Label2D {
        Label2D {
            x: o[0] * self.norm.label_std[0] + self.norm.label_mean[0],
            y: o[1] * self.norm.label_std[1] + self.norm.label_mean[1],
        }
    }

    pub fn predict(&self, sample: &CsiSample) -> Label2D {
        self.destandardize(self.forward_one(&self.norm.apply(&vectorize(sample))))
    }

    pub fn predict_all(&self, dataset: &Dataset) -> Result<Vec<Label2D>> {
        use rayon::prelude::*;
        self.check_input(dataset)?;
        Ok(dataset.samples().par_iter().map(|s| self.predict(s)).collect())
    }

    /// Mean squared position error and its gradient with respect to every
    /// parameter, in evaluation mode.
    pub fn loss_and_gradient(&self, dataset: &Dataset) -> Result<(f64, Vec<f64>)> {
        self.check_input(dataset)?;
        if dataset.is_empty() {
            return Err(Error::Empty("gradient of an empty dataset".into()));
        }
        let x = self.features(dataset.samples());
        let y = dataset.labels();
        let pass = train::Pass::run(self, &x, None);
        let (loss, _, grad) = pass.backward(self, &x, &y);
        Ok((loss, grad))
    }
}

/// Root mean squared Euclidean error. Squared errors are summed in sorted
/// order, so the result does not depend on sample order.
pub fn evaluate_rmse(model: &Model, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("cannot evaluate on an empty dataset".into()));
    }
    let preds = model.predict_all(dataset)?;
    let errors: Vec<f64> = preds
        .iter()
        .zip(dataset.samples())
        .map(|(p, s)| {
            let l = s.label();
            (p.x - l.x).powi(2) + (p.y - l.y).powi(2)
        })
        .collect();
    Ok(rmse_of_squared(errors))
}

pub fn rmse_of_squared(mut squared: Vec<f64>) -> f64 {
    squared.sort_by(f64::total_cmp);
    (squared.iter().sum::<f64>() / squared.len() as f64).sqrt()
}
