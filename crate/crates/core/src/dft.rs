//! Discrete Fourier transforms of arbitrary length.
//!
//! Convention: the forward transform is unnormalised,
//! `H[m] = Σ_n h[n]·exp(−j2π·m·n/M)`, and the inverse carries the `1/M`.
//! Power delay profiles elsewhere in the crate are `|dft_inverse(H)|²` under
//! this convention.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn check_len(len: usize) -> Result<()> {
    if len < 2 {
        return Err(Error::InvalidDimension(format!(
            "transform length must be at least 2, got {len}"
        )));
    }
    Ok(())
}

pub fn dft_forward(h: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(h.len())?;
    let mut buf = h.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    Ok(buf)
}

pub fn dft_inverse(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(spectrum.len())?;
    let mut buf = spectrum.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(&mut buf));
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}
