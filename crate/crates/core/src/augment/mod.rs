//! Label-preserving augmentation operators and dataset-level drivers.
//!
//! Every operator takes an [`RngStream`] and draws from its generator, so a
//! copy is reproducible from its key alone. Dataset drivers key copy `c` of
//! sample `i` as `rng/i/c` and emit the input samples first, then copies in
//! (copy, sample) order.

mod cells;
mod channel;
mod transceiver;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cells::{Cell, CellGrid};
pub use channel::{
    add_noise, build_covariance, corr_link, estimate_acf, pdp1_taps, pdp2_taps, pdp4_taps, rayleigh_taps,
    spectrum_of, strongest_tap, taps_of, AcfEstimate, CovarianceEstimate,
};
pub use transceiver::{
    amp_ap, amp_rx, draw_gains_db, draw_phases, phase_ap, phase_rx, rotate_phases, scale_gains_db, DriftUnit,
};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{ComplexVec, CsiSample, CsiTensor, Label2D, Method, Origin};

/// Tunables shared by all operators. Each method reads only its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Half-width of the uniform gain interval, dB.
    pub p_star_db: f64,
    /// ACF truncation lag; `None` means `M / 8`.
    pub delta_star: Option<usize>,
    /// Cell edge for cell-pooled methods, meters.
    pub cell_spacing: f64,
    /// Target SNR of noise injection, dB. `inf` disables the noise.
    pub snr_db: f64,
    /// Average the ACF over each cell's members instead of one snapshot.
    pub pool_acf: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            p_star_db: 1.0,
            delta_star: None,
            cell_spacing: 1.0,
            snr_db: 20.0,
            pool_acf: false,
        }
    }
}

impl AugmentParams {
    pub const SNR_LOS_DB: f64 = 20.0;
    pub const SNR_NLOS_DB: f64 = 15.0;

    pub fn delta_star_for(&self, n_subcarriers: usize) -> usize {
        self.delta_star.unwrap_or((n_subcarriers / 8).max(1))
    }

    pub fn validate(&self, n_subcarriers: usize) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.p_star_db >= 0.0 && self.p_star_db.is_finite()) {
            bad.push(format!("p_star_db must be >= 0 (got {})", self.p_star_db));
        }
        let d = self.delta_star_for(n_subcarriers);
        if d == 0 || d >= n_subcarriers {
            bad.push(format!("delta_star must lie in 1..={} (got {d})", n_subcarriers.saturating_sub(1)));
        }
        if !(self.cell_spacing > 0.0 && self.cell_spacing.is_finite()) {
            bad.push(format!("cell_spacing must be > 0 (got {})", self.cell_spacing));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            bad.push(format!("snr_db must be a number or +inf (got {})", self.snr_db));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

/// Per-source state computed once and reused for every copy.
#[derive(Debug, Clone)]
enum Prepared {
    Drift,
    Corr(Arc<Vec<CovarianceEstimate>>),
    Taps(Vec<Vec<Complex64>>),
    Cell { powers: Arc<Vec<Vec<f64>>>, center: Label2D },
    Noise(Vec<f64>),
}

fn link_taps(sample: &CsiSample) -> Result<Vec<Vec<Complex64>>> {
    sample.tensor().links().iter().map(taps_of).collect()
}

fn link_covariances(sample: &CsiSample, delta_star: usize) -> Result<Vec<CovarianceEstimate>> {
    sample
        .tensor()
        .links()
        .iter()
        .map(|l| build_covariance(&estimate_acf(l, delta_star)?))
        .collect()
}

fn noise_powers(sample: &CsiSample, snr_db: f64) -> Result<Vec<f64>> {
    if sample.tensor().energy() == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let scale = 10f64.powf(-snr_db / 10.0);
    Ok(sample.tensor().links().iter().map(|l| l.mean_power() * scale).collect())
}

/// Mean delay-domain power of one cell, `[link][bin]`, with its grid key.
pub type CellProfile = ((i64, i64), Vec<Vec<f64>>);

/// Power profile of every cell, keyed like the grid.
pub fn cell_power_profiles(dataset: &Dataset, grid: &CellGrid) -> Result<Vec<CellProfile>> {
    let samples = dataset.samples();
    grid.cells()
        .map(|(key, cell)| {
            let n_links = samples[cell.members[0]].tensor().links().len();
            let m = dataset.meta().n_subcarriers;
            let mut acc = vec![vec![0.0; m]; n_links];
            for &i in &cell.members {
                for (a, taps) in acc.iter_mut().zip(link_taps(&samples[i])?) {
                    for (p, t) in a.iter_mut().zip(taps) {
                        *p += t.norm_sqr();
                    }
                }
            }
            let n = cell.members.len() as f64;
            for a in &mut acc {
                for p in a.iter_mut() {
                    *p /= n;
                }
            }
            Ok((*key, acc))
        })
        .collect()
}

fn prepare(dataset: &Dataset, sources: &[usize], method: Method, params: &AugmentParams) -> Result<Vec<Prepared>> {
    let samples = dataset.samples();
    let delta_star = params.delta_star_for(dataset.meta().n_subcarriers);
    let needs_grid = method == Method::Pdp3 || (method == Method::Corr && params.pool_acf);
    let grid = if needs_grid {
        Some(CellGrid::build(&dataset.labels(), params.cell_spacing)?)
    } else {
        None
    };
    let cell_state: std::collections::BTreeMap<(i64, i64), Prepared> = match (method, &grid) {
        (Method::Pdp3, Some(g)) => cell_power_profiles(dataset, g)?
            .into_iter()
            .map(|(k, p)| {
                let center = g.cells().find(|(key, _)| **key == k).map(|(_, c)| c.center).expect("cell exists");
                (k, Prepared::Cell { powers: Arc::new(p), center })
            })
            .collect(),
        (Method::Corr, Some(g)) => g
            .cells()
            .map(|(k, cell)| {
                let n_links = samples[cell.members[0]].tensor().links().len();
                let covs = (0..n_links)
                    .map(|l| {
                        let est = cell
                            .members
                            .iter()
                            .map(|&i| estimate_acf(&samples[i].tensor().links()[l], delta_star))
                            .collect::<Result<Vec<_>>>()?;
                        build_covariance(&AcfEstimate::pooled(&est)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((*k, Prepared::Corr(Arc::new(covs))))
            })
            .collect::<Result<_>>()?,
        _ => Default::default(),
    };
    sources
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            Ok(match method {
                m if m.is_transceiver() => Prepared::Drift,
                Method::Corr => match &grid {
                    Some(g) => cell_state[&g.cell_key(i)].clone(),
                    None => Prepared::Corr(Arc::new(link_covariances(s, delta_star)?)),
                },
                Method::Pdp1 | Method::Pdp2 | Method::Pdp4 => {
                    Prepared::Taps(link_taps(s)?)
                }
                Method::Pdp3 => cell_state[&grid.as_ref().expect("grid built").cell_key(i)].clone(),
                Method::Noise => Prepared::Noise(noise_powers(s, params.snr_db)?),
                _ => unreachable!("transceiver methods handled above"),
            })
        })
        .collect()
}

fn generate(
    sample: &CsiSample,
    state: &Prepared,
    method: Method,
    params: &AugmentParams,
    rng: &RngStream,
) -> Result<CsiSample> {
    let mut g = rng.generator();
    let from_taps = |f: &mut dyn FnMut(usize) -> Vec<Complex64>| -> Result<CsiTensor> {
        sample.tensor().try_map_links(|ap, rx, _| spectrum_of(&f(ap * sample.tensor().n_rx() + rx)))
    };
    match (method, state) {
        (Method::PhaseAp, _) => phase_ap(sample, rng),
        (Method::PhaseRx, _) => phase_rx(sample, rng),
        (Method::AmpAp, _) => amp_ap(sample, params.p_star_db, rng),
        (Method::AmpRx, _) => amp_rx(sample, params.p_star_db, rng),
        (Method::Corr, Prepared::Corr(covs)) => {
            let t = sample.tensor().try_map_links(|ap, rx, _| {
                ComplexVec::new(covs[ap * sample.tensor().n_rx() + rx].draw(&mut g))
            })?;
            Ok(sample.augmented(t, method))
        }
        (Method::Pdp1 | Method::Pdp2 | Method::Pdp4, Prepared::Taps(taps)) => {
            let t = from_taps(&mut |l| match method {
                Method::Pdp1 => pdp1_taps(&taps[l], &mut g),
                Method::Pdp2 => pdp2_taps(&taps[l], &mut g),
                _ => pdp4_taps(&taps[l], &mut g),
            })?;
            Ok(sample.augmented(t, method))
        }
        (Method::Pdp3, Prepared::Cell { powers, center }) => {
            let t = from_taps(&mut |l| rayleigh_taps(&powers[l], &mut g))?;
            Ok(CsiSample::with_origin(t, *center, Origin::Augmented(method)))
        }
        (Method::Noise, Prepared::Noise(p)) => {
            let t = sample
                .tensor()
                .try_map_links(|ap, rx, l| add_noise(l, p[ap * sample.tensor().n_rx() + rx], &mut g))?;
            Ok(sample.augmented(t, method))
        }
        _ => unreachable!("prepared state matches the method"),
    }
}

fn single(sample: &CsiSample, method: Method, params: &AugmentParams, rng: &RngStream) -> Result<CsiSample> {
    let meta = crate::dataset::DatasetMeta {
        n_subcarriers: sample.tensor().n_subcarriers(),
        n_ap: sample.tensor().n_ap(),
        n_rx: sample.tensor().n_rx(),
        bandwidth_hz: 0.0,
        carrier_hz: 0.0,
        created_from: String::new(),
    };
    params.validate(meta.n_subcarriers)?;
    let ds = Dataset::new(meta, vec![sample.clone()])?;
    let state = prepare(&ds, &[0], method, params)?;
    generate(sample, &state[0], method, params, rng)
}

/// Correlation-based resampling of every link.
pub fn corr_augment(sample: &CsiSample, delta_star: usize, rng: &RngStream) -> Result<CsiSample> {
    let params = AugmentParams {
        delta_star: Some(delta_star),
        ..Default::default()
    };
    single(sample, Method::Corr, &params, rng)
}

pub fn pdp1(sample: &CsiSample, rng: &RngStream) -> Result<CsiSample> {
    single(sample, Method::Pdp1, &AugmentParams::default(), rng)
}

pub fn pdp2(sample: &CsiSample, rng: &RngStream) -> Result<CsiSample> {
    single(sample, Method::Pdp2, &AugmentParams::default(), rng)
}

pub fn pdp4(sample: &CsiSample, rng: &RngStream) -> Result<CsiSample> {
    single(sample, Method::Pdp4, &AugmentParams::default(), rng)
}

pub fn noise_inject(sample: &CsiSample, snr_db: f64, rng: &RngStream) -> Result<CsiSample> {
    let params = AugmentParams {
        snr_db,
        ..Default::default()
    };
    single(sample, Method::Noise, &params, rng)
}

/// One sample through any operator except the cell-pooled one.
pub fn augment_sample(sample: &CsiSample, method: Method, params: &AugmentParams, rng: &RngStream) -> Result<CsiSample> {
    if method == Method::Pdp3 {
        return Err(Error::InvalidArgument("pdp3 needs a dataset to form cells".into()));
    }
    single(sample, method, params, rng)
}

/// Cell-pooled Rayleigh resampling over an explicit grid: `factor` copies of
/// every sample, each labelled with its cell centre.
pub fn pdp3(dataset: &Dataset, grid: &CellGrid, factor: usize, rng: &RngStream) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(Error::Empty("pdp3 needs at least one sample".into()));
    }
    let powers: std::collections::BTreeMap<_, _> = cell_power_profiles(dataset, grid)?
        .into_iter()
        .map(|(k, p)| (k, Arc::new(p)))
        .collect();
    let states: Vec<Prepared> = (0..dataset.len())
        .map(|i| Prepared::Cell {
            powers: powers[&grid.cell_key(i)].clone(),
            center: grid.cell_of(i).center,
        })
        .collect();
    let sources: Vec<usize> = (0..dataset.len()).collect();
    emit(dataset, &sources, &states, Method::Pdp3, &AugmentParams::default(), factor, rng)
}

fn emit(
    dataset: &Dataset,
    sources: &[usize],
    states: &[Prepared],
    method: Method,
    params: &AugmentParams,
    factor: usize,
    rng: &RngStream,
) -> Result<Dataset> {
    let n_src = sources.len();
    let total = n_src
        .checked_mul(factor)
        .filter(|t| t.checked_add(dataset.len()).is_some())
        .ok_or_else(|| Error::InvalidArgument(format!("augmentation factor {factor} overflows")))?;
    emit_count(dataset, sources, states, method, params, total, rng)
}

/// Emit `count` copies cycling over `sources` in (copy, sample) order.
fn emit_count(
    dataset: &Dataset,
    sources: &[usize],
    states: &[Prepared],
    method: Method,
    params: &AugmentParams,
    count: usize,
    rng: &RngStream,
) -> Result<Dataset> {
    let samples = dataset.samples();
    let n_src = sources.len();
    let copies = (0..count)
        .into_par_iter()
        .map(|k| {
            let (slot, c) = (k % n_src, k / n_src);
            let i = sources[slot];
            generate(&samples[i], &states[slot], method, params, &rng.derive(i as u64).derive(c as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = samples.to_vec();
    out.extend(copies);
    dataset.with_samples(out)
}

/// Input samples followed by `factor` augmented copies of each.
pub fn augment_dataset(
    dataset: &Dataset,
    method: Method,
    params: &AugmentParams,
    factor: usize,
    rng: &RngStream,
) -> Result<Dataset> {
    let sources: Vec<usize> = (0..dataset.len()).collect();
    augment_subset(dataset, &sources, method, params, factor, rng)
}

/// Input samples followed by `factor` copies of each sample in `sources`.
pub fn augment_subset(
    dataset: &Dataset,
    sources: &[usize],
    method: Method,
    params: &AugmentParams,
    factor: usize,
    rng: &RngStream,
) -> Result<Dataset> {
    params.validate(dataset.meta().n_subcarriers)?;
    if let Some(&bad) = sources.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::InvalidArgument(format!("source index {bad} out of range")));
    }
    if factor == 0 || sources.is_empty() {
        return Ok(dataset.clone());
    }
    let states = prepare(dataset, sources, method, params)?;
    emit(dataset, sources, &states, method, params, factor, rng)
}

/// Grow `dataset` to exactly `target` samples by cycling over its samples.
pub fn augment_to_size(
    dataset: &Dataset,
    method: Method,
    params: &AugmentParams,
    target: usize,
    rng: &RngStream,
) -> Result<Dataset> {
    let n = dataset.len();
    if target < n {
        return Err(Error::InvalidArgument(format!("target size {target} is below the dataset size {n}")));
    }
    if n == 0 {
        return Err(Error::Empty("cannot augment an empty dataset".into()));
    }
    params.validate(dataset.meta().n_subcarriers)?;
    if target == n {
        return Ok(dataset.clone());
    }
    let sources: Vec<usize> = (0..n).collect();
    let states = prepare(dataset, &sources, method, params)?;
    emit_count(dataset, &sources, &states, method, params, target - n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMeta;
    use crate::rng::complex_normal;

    fn toy(n: usize, n_ap: usize, n_rx: usize, m: usize) -> Dataset {
        let mut g = RngStream::new(21).generator();
        let samples = (0..n)
            .map(|i| {
                let links = (0..n_ap * n_rx)
                    .map(|_| ComplexVec::new((0..m).map(|_| complex_normal(&mut g, 1.0)).collect()).unwrap())
                    .collect();
                CsiSample::measured(
                    CsiTensor::new(n_ap, n_rx, links).unwrap(),
                    Label2D { x: i as f64 * 0.7, y: (i % 3) as f64 },
                )
            })
            .collect();
        let meta = DatasetMeta {
            n_subcarriers: m,
            n_ap,
            n_rx,
            bandwidth_hz: 20e6,
            carrier_hz: 5e9,
            created_from: String::new(),
        };
        Dataset::new(meta, samples).unwrap()
    }

    #[test]
    fn copies_follow_copy_sample_order_and_keys() {
        let ds = toy(4, 2, 2, 16);
        let rng = RngStream::new(3);
        let params = AugmentParams::default();
        for method in Method::ALL.into_iter().filter(|m| *m != Method::Pdp3) {
            let out = augment_dataset(&ds, method, &params, 3, &rng).unwrap();
            assert_eq!(out.len(), 16);
            assert_eq!(&out.samples()[..4], ds.samples());
            for c in 0..3 {
                for i in 0..4 {
                    let got = &out.samples()[4 + c * 4 + i];
                    let want =
                        augment_sample(&ds.samples()[i], method, &params, &rng.derive(i as u64).derive(c as u64))
                            .unwrap();
                    assert_eq!(got, &want, "{method} copy {c} of {i}");
                    assert_eq!(got.origin(), Origin::Augmented(method));
                }
            }
        }
    }

    #[test]
    fn to_size_truncates_in_copy_order() {
        let ds = toy(5, 1, 1, 8);
        let rng = RngStream::new(9);
        let p = AugmentParams::default();
        let full = augment_dataset(&ds, Method::Pdp2, &p, 2, &rng).unwrap();
        let cut = augment_to_size(&ds, Method::Pdp2, &p, 12, &rng).unwrap();
        assert_eq!(cut.samples(), &full.samples()[..12]);
        assert_eq!(augment_to_size(&ds, Method::Pdp2, &p, 5, &rng).unwrap(), ds);
        assert!(augment_to_size(&ds, Method::Pdp2, &p, 4, &rng).is_err());
    }

    #[test]
    fn pdp3_labels_are_cell_centers() {
        let ds = toy(9, 1, 2, 8);
        let out = augment_dataset(&ds, Method::Pdp3, &AugmentParams::default(), 2, &RngStream::new(1)).unwrap();
        let grid = CellGrid::build(&ds.labels(), 1.0).unwrap();
        for (k, s) in out.samples()[9..].iter().enumerate() {
            assert_eq!(s.label(), grid.cell_of(k % 9).center);
        }
    }

    #[test]
    fn zero_factor_and_noise_guard() {
        let ds = toy(3, 1, 1, 8);
        let p = AugmentParams::default();
        assert_eq!(augment_dataset(&ds, Method::Corr, &p, 0, &RngStream::new(0)).unwrap(), ds);
        let z = ds.with_samples(vec![CsiSample::measured(
            CsiTensor::zeros(1, 1, 8).unwrap(),
            Label2D { x: 0.0, y: 0.0 },
        )]);
        assert!(matches!(
            augment_dataset(&z.unwrap(), Method::Noise, &p, 1, &RngStream::new(0)),
            Err(Error::ZeroEnergy)
        ));
    }

    #[test]
    fn params_validation_lists_fields() {
        let p = AugmentParams {
            p_star_db: -1.0,
            delta_star: Some(64),
            cell_spacing: 0.0,
            snr_db: f64::NAN,
            pool_acf: false,
        };
        match p.validate(64) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pooled_corr_runs() {
        let ds = toy(6, 1, 1, 16);
        let p = AugmentParams {
            pool_acf: true,
            ..Default::default()
        };
        let out = augment_dataset(&ds, Method::Corr, &p, 1, &RngStream::new(2)).unwrap();
        assert_eq!(out.len(), 12);
    }
}
