//! Minibatch training with decoupled weight decay, and domain transfer.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_rmse, MlpConfig, Model, Normalization, TrainConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::types::{Label2D, Origin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Training-mode loss of each sample averaged over epochs, m².
    pub per_sample_avg_loss: Vec<f64>,
    pub epoch_train_loss: Vec<f64>,
    /// Validation mean squared error per epoch, m². Empty without a validation set.
    pub epoch_val_loss: Vec<f64>,
    /// Epoch whose parameters were kept, if a validation set was given.
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    FullFineTune,
    FreezeFeatures,
}

impl std::str::FromStr for TransferMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "full-fine-tune" | "fine-tune" | "full" | "finetune" => Ok(TransferMode::FullFineTune),
            "freeze-features" | "freeze" => Ok(TransferMode::FreezeFeatures),
            _ => Err(Error::InvalidArgument(format!("unknown transfer mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for TransferMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransferMode::FullFineTune => "fine-tune",
            TransferMode::FreezeFeatures => "freeze",
        })
    }
}

/// Activations of one forward pass over a column batch.
pub(crate) struct Pass {
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
    masks: Vec<Option<DMatrix<f64>>>,
}

impl Pass {
    /// `dropout` carries the drop probability and the mask generator.
    pub(crate) fn run(model: &Model, x: &DMatrix<f64>, mut dropout: Option<(f64, &mut StreamRng)>) -> Pass {
        let n_layers = model.config.layer_shapes().len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (w, b) = model.layer(l);
            let input = if l == 0 { x } else { &post[l - 1] };
            let mut z = w * input;
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
            let mut a = z.clone();
            let mut mask = None;
            if l + 1 < n_layers {
                a.apply(|v| *v = v.max(0.0));
                if let Some((p, g)) = dropout.as_mut() {
                    if *p > 0.0 {
                        let keep = 1.0 - *p;
                        let m = DMatrix::from_fn(a.nrows(), a.ncols(), |_, _| {
                            if g.random::<f64>() < *p {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        });
                        a.component_mul_assign(&m);
                        mask = Some(m);
                    }
                }
            }
            pre.push(z);
            post.push(a);
            masks.push(mask);
        }
        Pass { pre, post, masks }
    }

    pub(crate) fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("at least one layer")
    }

    /// Mean loss, per-sample losses (m²) and the flat parameter gradient.
    pub(crate) fn backward(&self, model: &Model, x: &DMatrix<f64>, y: &[Label2D]) -> (f64, Vec<f64>, Vec<f64>) {
        let out = self.output();
        let batch = out.ncols();
        let s = model.norm.label_std;
        let mu = model.norm.label_mean;
        let mut losses = Vec::with_capacity(batch);
        let mut delta = DMatrix::zeros(2, batch);
        for (j, label) in y.iter().enumerate() {
            let ex = out[(0, j)] * s[0] + mu[0] - label.x;
            let ey = out[(1, j)] * s[1] + mu[1] - label.y;
            losses.push(ex * ex + ey * ey);
            delta[(0, j)] = 2.0 * ex * s[0] / batch as f64;
            delta[(1, j)] = 2.0 * ey * s[1] / batch as f64;
        }
        let loss = losses.iter().sum::<f64>() / batch as f64;

        let offsets = model.offsets();
        let mut grad = vec![0.0; model.params.len()];
        let n_layers = offsets.len();
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                // Through dropout and the rectifier.
                if let Some(m) = &self.masks[l] {
                    delta.component_mul_assign(m);
                }
                delta.zip_apply(&self.pre[l], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let input = if l == 0 { x } else { &self.post[l - 1] };
            let dw = &delta * input.transpose();
            let (w_at, b_at, end) = offsets[l];
            grad[w_at..b_at].copy_from_slice(dw.as_slice());
            for (g, row) in grad[b_at..end].iter_mut().zip(delta.row_iter()) {
                *g = row.sum();
            }
            if l > 0 {
                let (w, _) = model.layer(l);
                delta = w.transpose() * &delta;
            }
        }
        (loss, losses, grad)
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], range: Range<usize>, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in range {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            let update = (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
            params[i] -= cfg.learning_rate * (update + cfg.weight_decay * params[i]);
        }
    }
}

fn mse(model: &Model, dataset: &Dataset) -> Result<f64> {
    Ok(evaluate_rmse(model, dataset)?.powi(2))
}

/// Optimise `model.params[trainable]` in place.
fn fit(
    model: &mut Model,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
    trainable: Range<usize>,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    model.check_input(train_set)?;
    if !val_set.is_empty() {
        model.check_input(val_set)?;
    }
    let n = train_set.len();
    let x = model.features(train_set.samples());
    let labels = train_set.labels();
    let root = RngStream::new(cfg.seed).derive(1);
    let mut adam = AdamW::new(model.params.len());
    let mut loss_sum = vec![0.0; n];
    let mut trace = TrainTrace {
        per_sample_avg_loss: Vec::new(),
        epoch_train_loss: Vec::with_capacity(cfg.epochs),
        epoch_val_loss: Vec::new(),
        best_epoch: None,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let dropout_p = model.config.dropout_p;

    for epoch in 0..cfg.epochs {
        let mut g = root.derive(epoch as u64).generator();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut g);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select_columns(batch);
            let yb: Vec<Label2D> = batch.iter().map(|&i| labels[i]).collect();
            let pass = Pass::run(model, &xb, Some((dropout_p, &mut g)));
            let (loss, losses, grad) = pass.backward(model, &xb, &yb);
            if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "training loss became {loss} in epoch {epoch}; lower the learning rate or check the inputs for exploding gradients"
                )));
            }
            for (&i, l) in batch.iter().zip(&losses) {
                loss_sum[i] += l;
                epoch_sum += l;
            }
            adam.step(&mut model.params, &grad, trainable.clone(), cfg);
        }
        trace.epoch_train_loss.push(epoch_sum / n as f64);
        if !val_set.is_empty() {
            let v = mse(model, val_set)?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!("validation loss became {v} in epoch {epoch}")));
            }
            trace.epoch_val_loss.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
                trace.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    trace.per_sample_avg_loss = loss_sum.into_iter().map(|s| s / cfg.epochs as f64).collect();
    Ok(trace)
}

/// Train a fresh network. Feature statistics come from the measured samples
/// of `train_set` (all samples if none are measured).
pub fn train(train_set: &Dataset, val_set: &Dataset, mlp: &MlpConfig, cfg: &TrainConfig) -> Result<(Model, TrainTrace)> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    if mlp.input_dim != train_set.meta().feature_dim() {
        return Err(Error::InvalidDimension(format!(
            "network input_dim {} differs from feature dimension {}",
            mlp.input_dim,
            train_set.meta().feature_dim()
        )));
    }
    let measured: Vec<usize> = (0..train_set.len())
        .filter(|&i| train_set.samples()[i].origin() == Origin::Measured)
        .collect();
    let norm = if measured.is_empty() {
        Normalization::fit(train_set)?
    } else {
        Normalization::fit(&train_set.subset(&measured)?)?
    };
    let mut model = Model::new(mlp.clone(), norm, &RngStream::new(cfg.seed).derive(0))?;
    let all = 0..model.params.len();
    let trace = fit(&mut model, train_set, val_set, cfg, all)?;
    Ok((model, trace))
}

/// Adapt a trained network to a new domain. The source normalisation is kept.
pub fn transfer(
    source: &Model,
    target_train: &Dataset,
    target_val: &Dataset,
    mode: TransferMode,
    cfg: &TrainConfig,
) -> Result<(Model, TrainTrace)> {
    source.check_input(target_train)?;
    let mut model = source.clone();
    let trainable = match mode {
        TransferMode::FullFineTune => 0..model.params.len(),
        TransferMode::FreezeFeatures => {
            model.reinit_head(&RngStream::new(cfg.seed).derive(2));
            model.feature_range().end..model.params.len()
        }
    };
    let trace = fit(&mut model, target_train, target_val, cfg, trainable)?;
    Ok((model, trace))
}
