//! Hard-sample selection from the per-sample training loss.

use super::TrainTrace;
use crate::augment::{augment_subset, AugmentParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::Method;

/// Split sample indices into the `⌈N·rho_hs⌉` highest-loss samples and the
/// rest. Equal losses keep their original order. Both lists are ascending.
pub fn rank_difficulty(trace: &TrainTrace, rho_hs: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(rho_hs > 0.0 && rho_hs <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho_hs must lie in (0, 1] (got {rho_hs})")));
    }
    let losses = &trace.per_sample_avg_loss;
    let n = losses.len();
    let n_hard = ((n as f64 * rho_hs) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    let mut hard = order[..n_hard.min(n)].to_vec();
    let mut easy = order[n_hard.min(n)..].to_vec();
    hard.sort_unstable();
    easy.sort_unstable();
    Ok((hard, easy))
}

/// The `count` lowest-loss samples, ties by index, returned ascending.
pub fn easiest(trace: &TrainTrace, count: usize) -> Vec<usize> {
    let losses = &trace.per_sample_avg_loss;
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
    let mut out = order[..count.min(order.len())].to_vec();
    out.sort_unstable();
    out
}

/// Copies per selected sample, `round(1/rho_hs)`.
pub fn selection_factor(rho_hs: f64) -> Result<usize> {
    if !(rho_hs > 0.0 && rho_hs <= 1.0) {
        return Err(Error::InvalidArgument(format!("rho_hs must lie in (0, 1] (got {rho_hs})")));
    }
    let f = (1.0 / rho_hs).round();
    if f > (u32::MAX as f64) {
        return Err(Error::InvalidArgument(format!("rho_hs {rho_hs} gives an oversized factor")));
    }
    Ok(f as usize)
}

/// Every sample once, plus `round(1/rho_hs)` copies of each selected sample.
pub fn augment_selected(
    dataset: &Dataset,
    selected: &[usize],
    method: Method,
    rho_hs: f64,
    params: &AugmentParams,
    rng: &RngStream,
) -> Result<Dataset> {
    let factor = selection_factor(rho_hs)?;
    augment_subset(dataset, selected, method, params, factor, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(losses: Vec<f64>) -> TrainTrace {
        TrainTrace {
            per_sample_avg_loss: losses,
            epoch_train_loss: vec![],
            epoch_val_loss: vec![],
            best_epoch: None,
        }
    }

    #[test]
    fn sorts_by_loss() {
        let (hard, easy) = rank_difficulty(&trace(vec![5.0, 1.0, 3.0, 2.0]), 0.5).unwrap();
        assert_eq!(hard, vec![0, 2]);
        assert_eq!(easy, vec![1, 3]);
    }

    #[test]
    fn ties_keep_original_order() {
        let (hard, _) = rank_difficulty(&trace(vec![1.0; 10]), 0.25).unwrap();
        assert_eq!(hard, vec![0, 1, 2]);
    }

    #[test]
    fn factors() {
        assert_eq!(selection_factor(0.5).unwrap(), 2);
        assert_eq!(selection_factor(0.25).unwrap(), 4);
        assert_eq!(selection_factor(0.125).unwrap(), 8);
        assert!(selection_factor(0.0).is_err());
        assert!(rank_difficulty(&trace(vec![1.0]), 1.5).is_err());
    }
}
