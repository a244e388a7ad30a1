//! Operators that resample a link from its own channel statistics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::dft;
use crate::error::{Error, Result};
use crate::rng::{complex_normal, uniform_phase};
use crate::types::ComplexVec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Frequency-domain autocorrelation of one link, truncated at `delta_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfEstimate {
    r: Vec<Complex64>,
    delta_star: usize,
}

impl AcfEstimate {
    /// Wrap explicit lag values. Lags beyond `delta_star` are zeroed.
    pub fn new(mut r: Vec<Complex64>, delta_star: usize) -> Result<Self> {
        let m = r.len();
        check_lag(m, delta_star)?;
        if r[0].im != 0.0 || r[0].re.is_nan() || r[0].re < 0.0 {
            return Err(Error::InvalidArgument(format!("r[0] must be real and >= 0 (got {})", r[0])));
        }
        for v in &mut r[delta_star + 1..] {
            *v = ZERO;
        }
        Ok(Self { r, delta_star })
    }

    pub fn lags(&self) -> &[Complex64] {
        &self.r
    }

    pub fn delta_star(&self) -> usize {
        self.delta_star
    }

    pub fn power(&self) -> f64 {
        self.r[0].re
    }

    /// Lag-wise mean of several estimates with the same length and truncation.
    pub fn pooled(estimates: &[AcfEstimate]) -> Result<Self> {
        let first = estimates.first().ok_or_else(|| Error::Empty("no ACF estimates to pool".into()))?;
        let m = first.r.len();
        if estimates.iter().any(|e| e.r.len() != m || e.delta_star != first.delta_star) {
            return Err(Error::InvalidDimension("pooled ACF estimates differ in shape".into()));
        }
        let n = estimates.len() as f64;
        let r = (0..m)
            .map(|d| estimates.iter().map(|e| e.r[d]).sum::<Complex64>() / n)
            .collect();
        Ok(Self {
            r,
            delta_star: first.delta_star,
        })
    }
}

fn check_lag(m: usize, delta_star: usize) -> Result<()> {
    if m < 2 || delta_star == 0 || delta_star >= m {
        return Err(Error::InvalidArgument(format!(
            "delta_star must lie in 1..={} (got {delta_star})",
            m.saturating_sub(1)
        )));
    }
    Ok(())
}

/// `r[Δ] = mean_i H[i]·conj(H[i+Δ])` for `Δ ≤ delta_star`, zero beyond.
pub fn estimate_acf(h: &ComplexVec, delta_star: usize) -> Result<AcfEstimate> {
    let h = h.as_slice();
    let m = h.len();
    check_lag(m, delta_star)?;
    let mut r = vec![ZERO; m];
    for (d, slot) in r.iter_mut().enumerate().take(delta_star + 1) {
        let sum: Complex64 = h[..m - d].iter().zip(&h[d..]).map(|(a, b)| a * b.conj()).sum();
        *slot = sum / (m - d) as f64;
    }
    r[0].im = 0.0;
    Ok(AcfEstimate { r, delta_star })
}

/// Normalised Toeplitz correlation matrix with its Hermitian square root.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    sigma: DMatrix<Complex64>,
    c_factor: DMatrix<Complex64>,
    recon_error: f64,
    r0: f64,
}

impl CovarianceEstimate {
    pub fn sigma(&self) -> &DMatrix<Complex64> {
        &self.sigma
    }

    pub fn c_factor(&self) -> &DMatrix<Complex64> {
        &self.c_factor
    }

    /// `‖Σ − CC†‖_F / ‖CC†‖_F`.
    pub fn recon_error(&self) -> f64 {
        self.recon_error
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `C·x` with `x` i.i.d. `CN(0, r0)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let m = self.dim();
        let x: Vec<Complex64> = (0..m).map(|_| complex_normal(rng, self.r0)).collect();
        (0..m)
            .map(|i| (0..m).map(|j| self.c_factor[(i, j)] * x[j]).sum())
            .collect()
    }
}

/// Build `Σ[m][n] = r[n−m]/r0` for `n ≥ m` (Hermitian below the diagonal), so
/// `Σ[m][n]` estimates `E[H_m·conj(H_n)]/r0`. The factor comes from an
/// eigendecomposition with negative eigenvalues clamped to zero.
pub fn build_covariance(acf: &AcfEstimate) -> Result<CovarianceEstimate> {
    let r0 = acf.power();
    if !r0.is_finite() || r0 <= 0.0 {
        return Err(Error::DegeneratePower(r0));
    }
    let m = acf.r.len();
    let sigma = DMatrix::from_fn(m, m, |i, j| {
        if j >= i {
            acf.r[j - i] / r0
        } else {
            (acf.r[i - j] / r0).conj()
        }
    });
    let eig = sigma.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition of the correlation matrix diverged".into()));
    }
    let v = &eig.eigenvectors;
    let scaled_cols = |f: &dyn Fn(f64) -> f64| {
        let mut out = v.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            col *= Complex64::new(f(eig.eigenvalues[k]), 0.0);
        }
        out
    };
    let c_factor = scaled_cols(&|l| l.max(0.0).sqrt()) * v.adjoint();
    let cch = scaled_cols(&|l| l.max(0.0)) * v.adjoint();
    let denom = cch.norm();
    let recon_error = if denom > 0.0 { (&sigma - &cch).norm() / denom } else { f64::INFINITY };
    Ok(CovarianceEstimate {
        sigma,
        c_factor,
        recon_error,
        r0,
    })
}

/// Correlation-based resampling of one link.
pub fn corr_link<R: Rng + ?Sized>(h: &ComplexVec, delta_star: usize, rng: &mut R) -> Result<ComplexVec> {
    let cov = build_covariance(&estimate_acf(h, delta_star)?)?;
    ComplexVec::new(cov.draw(rng))
}

/// Keep every tap magnitude, draw fresh uniform phases.
pub fn pdp1_taps<R: Rng + ?Sized>(taps: &[Complex64], rng: &mut R) -> Vec<Complex64> {
    taps.iter().map(|t| Complex64::from_polar(t.norm(), uniform_phase(rng))).collect()
}

/// Redraw every tap as `CN(0, |h|²)`.
pub fn pdp2_taps<R: Rng + ?Sized>(taps: &[Complex64], rng: &mut R) -> Vec<Complex64> {
    taps.iter().map(|t| complex_normal(rng, 1.0) * t.norm()).collect()
}

/// Redraw every tap as `CN(0, P[m])` from an explicit power profile.
pub fn rayleigh_taps<R: Rng + ?Sized>(powers: &[f64], rng: &mut R) -> Vec<Complex64> {
    powers.iter().map(|&p| complex_normal(rng, 1.0) * p.sqrt()).collect()
}

/// Index of the strongest tap, lowest index on ties.
pub fn strongest_tap(taps: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_p = taps.first().map_or(0.0, |t| t.norm_sqr());
    for (i, t) in taps.iter().enumerate().skip(1) {
        let p = t.norm_sqr();
        if p > best_p {
            best = i;
            best_p = p;
        }
    }
    best
}

/// Strongest tap keeps its magnitude with a fresh phase; the rest follow pdp2.
pub fn pdp4_taps<R: Rng + ?Sized>(taps: &[Complex64], rng: &mut R) -> Vec<Complex64> {
    let peak = strongest_tap(taps);
    taps.iter()
        .enumerate()
        .map(|(i, t)| {
            if i == peak {
                Complex64::from_polar(t.norm(), uniform_phase(rng))
            } else {
                complex_normal(rng, 1.0) * t.norm()
            }
        })
        .collect()
}

/// Delay-domain taps of a link.
pub fn taps_of(h: &ComplexVec) -> Result<Vec<Complex64>> {
    dft::dft_inverse(h.as_slice())
}

pub fn spectrum_of(taps: &[Complex64]) -> Result<ComplexVec> {
    ComplexVec::new(dft::dft_forward(taps)?)
}

/// `H + n`, `n ~ CN(0, noise_power)` per subcarrier.
pub fn add_noise<R: Rng + ?Sized>(h: &ComplexVec, noise_power: f64, rng: &mut R) -> Result<ComplexVec> {
    if noise_power == 0.0 {
        return Ok(h.clone());
    }
    ComplexVec::new(h.as_slice().iter().map(|v| v + complex_normal(rng, noise_power)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_vec(m: usize, seed: u64) -> ComplexVec {
        let mut g = RngStream::new(seed).generator();
        ComplexVec::new((0..m).map(|_| complex_normal(&mut g, 1.0)).collect()).unwrap()
    }

    #[test]
    fn acf_of_constant_vector() {
        let c = Complex64::new(0.6, -0.8);
        let h = ComplexVec::new(vec![c; 12]).unwrap();
        let acf = estimate_acf(&h, 5).unwrap();
        for d in 0..=5 {
            assert!((acf.lags()[d] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        assert!(acf.lags()[6..].iter().all(|v| *v == ZERO));
    }

    #[test]
    fn acf_matches_pair_sum() {
        let h = random_vec(16, 3);
        let acf = estimate_acf(&h, 15).unwrap();
        let x = h.as_slice();
        for d in 0..16 {
            let mut sum = ZERO;
            let mut count = 0;
            for i in 0..16 {
                for j in 0..16 {
                    if j as isize - i as isize == d as isize {
                        sum += x[i] * x[j].conj();
                        count += 1;
                    }
                }
            }
            assert!((acf.lags()[d] - sum / count as f64).norm() < 1e-12);
        }
    }

    #[test]
    fn acf_lag_range_checked() {
        let h = random_vec(8, 1);
        assert!(estimate_acf(&h, 0).is_err());
        assert!(estimate_acf(&h, 8).is_err());
        assert!(estimate_acf(&h, 7).is_ok());
    }

    #[test]
    fn white_acf_gives_identity() {
        let mut r = vec![ZERO; 10];
        r[0] = Complex64::new(2.5, 0.0);
        let cov = build_covariance(&AcfEstimate::new(r, 3).unwrap()).unwrap();
        let id = DMatrix::<Complex64>::identity(10, 10);
        assert!((cov.sigma() - &id).norm() < 1e-15);
        assert!((cov.c_factor() - &id).norm() < 1e-12);
        assert!(cov.recon_error() < 1e-12);
    }

    #[test]
    fn psd_acf_factors_exactly() {
        // Exponential correlation is positive definite for any size.
        let m = 40;
        let r: Vec<Complex64> = (0..m)
            .map(|d| Complex64::from_polar(0.8f64.powi(d as i32), 0.3 * d as f64))
            .collect();
        let cov = build_covariance(&AcfEstimate::new(r, m - 1).unwrap()).unwrap();
        assert!(cov.recon_error() < 1e-10, "{}", cov.recon_error());
        for i in 0..m {
            assert!((cov.sigma()[(i, i)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            for j in 0..m {
                assert_eq!(cov.sigma()[(i, j)], cov.sigma()[(j, i)].conj());
            }
        }
    }

    #[test]
    fn zero_power_is_degenerate() {
        let h = ComplexVec::zeros(8).unwrap();
        let acf = estimate_acf(&h, 2).unwrap();
        assert!(matches!(build_covariance(&acf), Err(Error::DegeneratePower(_))));
    }

    #[test]
    fn pdp2_zero_tap_stays_zero() {
        let mut g = RngStream::new(5).generator();
        let taps = vec![Complex64::new(1.0, 1.0), ZERO, Complex64::new(0.0, 2.0)];
        for _ in 0..100 {
            assert_eq!(pdp2_taps(&taps, &mut g)[1], ZERO);
        }
    }

    #[test]
    fn strongest_tap_breaks_ties_low() {
        let t = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.5, 0.0)];
        assert_eq!(strongest_tap(&t), 0);
        assert_eq!(strongest_tap(&[ZERO; 4]), 0);
        let t = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0), Complex64::new(2.0, 0.0)];
        assert_eq!(strongest_tap(&t), 1);
    }
}
