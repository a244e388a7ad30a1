//! Hard-sample selection and domain-transfer scenarios.

use rayon::prelude::*;

use super::{subsample, ExperimentSpec, LearnerSpec, Report, ReportRow};
use crate::augment::{augment_dataset, AugmentParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learner::{
    augment_selected, easiest, evaluate_rmse, rank_difficulty, selection_factor, train, transfer, Model, TrainConfig,
    TransferMode,
};
use crate::rng::RngStream;
use crate::types::Method;

/// Rows of one trial: the baseline, then hard-only and easy-only
/// augmentation for each ratio. Both arms augment the same number of samples.
pub fn hard_easy_rows(
    spec: &ExperimentSpec,
    data: &super::DataSplits,
    trial: usize,
    rhos: &[f64],
    method: Method,
) -> Result<Vec<ReportRow>> {
    let rng = spec.trial_stream(trial);
    let subset = subsample(&data.train_pool, spec.original_size, &rng.derive(0))?;
    let mlp = spec.learner.config(subset.meta().feature_dim());
    let cfg = TrainConfig {
        seed: rng.derive(1).seed_u64(),
        ..spec.train.clone()
    };
    let (model, trace) = train(&subset, &data.val, &mlp, &cfg)?;
    let mut rows = vec![ReportRow::ok("baseline", 0, trial, evaluate_rmse(&model, &data.test)?)];
    for &rho in rhos {
        let factor = selection_factor(rho)?;
        let (hard, _) = rank_difficulty(&trace, rho)?;
        let easy = easiest(&trace, hard.len());
        let aug_rng = rng.derive(3).derive(method.tag() as u64).derive(factor as u64);
        for (arm, picked) in [("hard", &hard), ("easy", &easy)] {
            let set = augment_selected(&subset, picked, method, rho, &spec.augment, &aug_rng)?;
            let (m, _) = train(&set, &data.val, &mlp, &cfg)?;
            rows.push(ReportRow::ok(format!("{arm}-{method}"), factor, trial, evaluate_rmse(&m, &data.test)?));
        }
    }
    Ok(rows)
}

/// Hard-only versus easy-only augmentation over every trial of `spec`.
pub fn run_hard_easy(spec: &ExperimentSpec, rhos: &[f64], method: Method) -> Result<Report> {
    spec.validate()?;
    let data = spec.load_data()?;
    let rows = (0..spec.trials)
        .into_par_iter()
        .map(|t| hard_easy_rows(spec, &data, t, rhos, method))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::new(rows.into_iter().flatten().collect()))
}

#[derive(Debug, Clone)]
pub enum SourceModel {
    Pretrained(Model),
    /// Train a source model per trial on this dataset.
    TrainOn(Dataset),
}

#[derive(Debug, Clone)]
pub struct TransferSetup {
    pub source: SourceModel,
    pub target_pool: Dataset,
    pub target_val: Dataset,
    pub target_test: Dataset,
    pub target_size: usize,
    /// Target-domain augmentation factors; 0 means none.
    pub factors: Vec<usize>,
    pub modes: Vec<TransferMode>,
    pub method: Method,
    pub augment: AugmentParams,
    pub learner: LearnerSpec,
    pub train: TrainConfig,
    pub trials: usize,
    pub seed: u64,
}

/// Rows of one trial: `source-only`, then `target-only` and one row per
/// transfer mode at every target augmentation factor.
pub fn transfer_rows(setup: &TransferSetup, trial: usize) -> Result<Vec<ReportRow>> {
    let rng = RngStream::new(setup.seed).derive(0).derive(trial as u64);
    let cfg = TrainConfig {
        seed: rng.derive(1).seed_u64(),
        ..setup.train.clone()
    };
    let mlp = setup.learner.config(setup.target_pool.meta().feature_dim());
    let source = match &setup.source {
        SourceModel::Pretrained(m) => m.clone(),
        SourceModel::TrainOn(ds) => {
            let empty = ds.with_samples(Vec::new())?;
            let src_cfg = TrainConfig {
                seed: rng.derive(4).seed_u64(),
                ..setup.train.clone()
            };
            train(ds, &empty, &mlp, &src_cfg)?.0
        }
    };
    source.check_input(&setup.target_pool)?;
    let subset = subsample(&setup.target_pool, setup.target_size, &rng.derive(0))?;
    let mut rows = vec![ReportRow::ok("source-only", 0, trial, evaluate_rmse(&source, &setup.target_test)?)];
    for &factor in &setup.factors {
        let target = augment_dataset(
            &subset,
            setup.method,
            &setup.augment,
            factor,
            &rng.derive(2).derive(factor as u64),
        )?;
        let (scratch, _) = train(&target, &setup.target_val, &mlp, &cfg)?;
        rows.push(ReportRow::ok("target-only", factor, trial, evaluate_rmse(&scratch, &setup.target_test)?));
        for &mode in &setup.modes {
            let (adapted, _) = transfer(&source, &target, &setup.target_val, mode, &cfg)?;
            if mode == TransferMode::FreezeFeatures && adapted.feature_params() != source.feature_params() {
                return Err(Error::Numeric("frozen feature extractor changed during transfer".into()));
            }
            rows.push(ReportRow::ok(
                mode.to_string(),
                factor,
                trial,
                evaluate_rmse(&adapted, &setup.target_test)?,
            ));
        }
    }
    Ok(rows)
}

pub fn run_transfer(setup: &TransferSetup) -> Result<Report> {
    if setup.trials == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    let rows = (0..setup.trials)
        .into_par_iter()
        .map(|t| transfer_rows(setup, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report::new(rows.into_iter().flatten().collect()))
}
