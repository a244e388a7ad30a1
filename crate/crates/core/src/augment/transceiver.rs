//! Hardware-drift operators: one random phase or gain per AP or per antenna.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{uniform_phase, RngStream};
use crate::types::{ComplexVec, CsiSample, Method};

/// Granularity of a drift draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftUnit {
    /// One draw shared by every antenna of an AP.
    Ap,
    /// One draw per (AP, antenna) pair.
    Antenna,
}

impl DriftUnit {
    pub fn count(self, sample: &CsiSample) -> usize {
        let t = sample.tensor();
        match self {
            DriftUnit::Ap => t.n_ap(),
            DriftUnit::Antenna => t.n_ap() * t.n_rx(),
        }
    }

    fn index(self, n_rx: usize, ap: usize, rx: usize) -> usize {
        match self {
            DriftUnit::Ap => ap,
            DriftUnit::Antenna => ap * n_rx + rx,
        }
    }
}

fn check_count(unit: DriftUnit, sample: &CsiSample, got: usize) -> Result<()> {
    let want = unit.count(sample);
    if got != want {
        return Err(Error::InvalidDimension(format!("expected {want} drift values, got {got}")));
    }
    Ok(())
}

/// Multiply each unit by `exp(j·phases[u])`.
pub fn rotate_phases(sample: &CsiSample, unit: DriftUnit, phases: &[f64], method: Method) -> Result<CsiSample> {
    check_count(unit, sample, phases.len())?;
    let n_rx = sample.tensor().n_rx();
    let tensor = sample.tensor().try_map_links(|ap, rx, l| {
        let rot = Complex64::from_polar(1.0, phases[unit.index(n_rx, ap, rx)]);
        ComplexVec::new(l.as_slice().iter().map(|v| v * rot).collect())
    })?;
    Ok(sample.augmented(tensor, method))
}

/// Scale each unit's magnitudes by `10^(gains_db[u]/10)`; phases are untouched.
pub fn scale_gains_db(sample: &CsiSample, unit: DriftUnit, gains_db: &[f64], method: Method) -> Result<CsiSample> {
    check_count(unit, sample, gains_db.len())?;
    let n_rx = sample.tensor().n_rx();
    let tensor = sample.tensor().try_map_links(|ap, rx, l| {
        let g = 10f64.powf(gains_db[unit.index(n_rx, ap, rx)] / 10.0);
        ComplexVec::new(l.as_slice().iter().map(|v| v * g).collect())
    })?;
    Ok(sample.augmented(tensor, method))
}

pub fn draw_phases<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| uniform_phase(rng)).collect()
}

pub fn draw_gains_db<R: Rng + ?Sized>(n: usize, p_star_db: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| if p_star_db == 0.0 { 0.0 } else { rng.random_range(-p_star_db..=p_star_db) })
        .collect()
}

fn check_p_star(p_star_db: f64) -> Result<()> {
    if !(p_star_db >= 0.0 && p_star_db.is_finite()) {
        return Err(Error::InvalidArgument(format!("p_star must be >= 0 dB (got {p_star_db})")));
    }
    Ok(())
}

pub fn phase_ap(sample: &CsiSample, rng: &RngStream) -> Result<CsiSample> {
    let phases = draw_phases(DriftUnit::Ap.count(sample), &mut rng.generator());
    rotate_phases(sample, DriftUnit::Ap, &phases, Method::PhaseAp)
}

pub fn phase_rx(sample: &CsiSample, rng: &RngStream) -> Result<CsiSample> {
    let phases = draw_phases(DriftUnit::Antenna.count(sample), &mut rng.generator());
    rotate_phases(sample, DriftUnit::Antenna, &phases, Method::PhaseRx)
}

pub fn amp_ap(sample: &CsiSample, p_star_db: f64, rng: &RngStream) -> Result<CsiSample> {
    check_p_star(p_star_db)?;
    let gains = draw_gains_db(DriftUnit::Ap.count(sample), p_star_db, &mut rng.generator());
    scale_gains_db(sample, DriftUnit::Ap, &gains, Method::AmpAp)
}

pub fn amp_rx(sample: &CsiSample, p_star_db: f64, rng: &RngStream) -> Result<CsiSample> {
    check_p_star(p_star_db)?;
    let gains = draw_gains_db(DriftUnit::Antenna.count(sample), p_star_db, &mut rng.generator());
    scale_gains_db(sample, DriftUnit::Antenna, &gains, Method::AmpRx)
}
