//! Synthetic multipath rooms and their channel frequency responses.
//!
//! The channel from a single-antenna UE to antenna `k` of AP `j` is a sum of
//! discrete paths,
//!
//! ```text
//! H_{j,k}(f_m) = Σ_l α_l · exp(−jπ·k·sin(φ_l − ψ_j)) · exp(−j2π·f_m·τ_l)
//! ```
//!
//! with one direct path (`α = λ / 4πd`) when line of sight is enabled and one
//! single-bounce path per scatterer (`α = ρ · λ / 4πd_total`). `φ_l` is the
//! arrival azimuth at the AP and `ψ_j` the array orientation. Subcarriers sit
//! on the centred grid `f_m = f_c − B/2 + (m + ½)·B/M`, `m = 0..M`.
//!
//! Environments are TOML files:
//!
//! ```toml
//! room_width = 10.0        # m
//! room_depth = 10.0        # m
//! n_rx = 4                 # antennas per AP, half-wavelength ULA
//! n_scatterers = 60
//! los_enabled = false
//! carrier_freq_hz = 5.0e9
//! bandwidth_hz = 80.0e6
//! n_subcarriers = 234
//! noise_variance = 1.0e-10 # linear power per subcarrier
//! seed = 1
//!
//! [[aps]]
//! x = 0.25
//! y = 0.25
//! orientation_rad = 0.785
//! ```

use std::f64::consts::{PI, TAU};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::rng::{complex_normal, uniform_phase, RngStream};
use crate::types::{ComplexVec, CsiSample, CsiTensor, Label2D};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Path lengths are clamped to this many meters to keep gains finite.
const MIN_PATH_LENGTH: f64 = 0.1;
const REFLECTIVITY_RANGE: (f64, f64) = (0.05, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub x: f64,
    pub y: f64,
    /// Broadside direction of the array, radians from the +x axis.
    #[serde(default)]
    pub orientation_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub room_width: f64,
    pub room_depth: f64,
    pub n_rx: usize,
    pub n_scatterers: usize,
    pub los_enabled: bool,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub noise_variance: f64,
    pub seed: u64,
    pub aps: Vec<ApConfig>,
}

impl EnvConfig {
    /// A room with `n_ap` APs spread around the walls, each facing the
    /// centre. Radio parameters default to 5 GHz / 80 MHz / 234 subcarriers.
    pub fn with_perimeter_aps(width: f64, depth: f64, n_ap: usize, n_rx: usize) -> Self {
        let inset = 0.25;
        let perimeter = 2.0 * (width + depth);
        let aps = (0..n_ap)
            .map(|i| {
                // Walk the wall loop starting half a step in from a corner.
                let s = (i as f64 + 0.5) / n_ap as f64 * perimeter;
                let (x, y) = if s < width {
                    (s, inset)
                } else if s < width + depth {
                    (width - inset, s - width)
                } else if s < 2.0 * width + depth {
                    (width - (s - width - depth), depth - inset)
                } else {
                    (inset, depth - (s - 2.0 * width - depth))
                };
                let x = x.clamp(inset, width - inset);
                let y = y.clamp(inset, depth - inset);
                let orientation_rad = (depth / 2.0 - y).atan2(width / 2.0 - x);
                ApConfig { x, y, orientation_rad }
            })
            .collect();
        Self {
            room_width: width,
            room_depth: depth,
            n_rx,
            n_scatterers: 60,
            los_enabled: true,
            carrier_freq_hz: 5.0e9,
            bandwidth_hz: 80.0e6,
            n_subcarriers: 234,
            noise_variance: 0.0,
            seed: 1,
            aps,
        }
    }

    pub fn n_ap(&self) -> usize {
        self.aps.len()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Centre frequency of subcarrier `m` (zero-based).
    pub fn subcarrier_freq(&self, m: usize) -> f64 {
        let df = self.bandwidth_hz / self.n_subcarriers as f64;
        self.carrier_freq_hz - self.bandwidth_hz / 2.0 + (m as f64 + 0.5) * df
    }

    pub fn contains(&self, p: Label2D) -> bool {
        p.x >= 0.0 && p.x <= self.room_width && p.y >= 0.0 && p.y <= self.room_depth
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.room_width > 0.0 && self.room_width.is_finite()) {
            bad.push(format!("room_width must be > 0 (got {})", self.room_width));
        }
        if !(self.room_depth > 0.0 && self.room_depth.is_finite()) {
            bad.push(format!("room_depth must be > 0 (got {})", self.room_depth));
        }
        if self.aps.is_empty() {
            bad.push("aps: at least one access point is required".to_string());
        }
        if self.aps.len() > u16::MAX as usize {
            bad.push("aps: too many access points".to_string());
        }
        for (i, ap) in self.aps.iter().enumerate() {
            let inside = ap.x >= 0.0 && ap.x <= self.room_width && ap.y >= 0.0 && ap.y <= self.room_depth;
            if !inside || !ap.orientation_rad.is_finite() {
                bad.push(format!("aps[{i}] at ({}, {}) is not inside the room", ap.x, ap.y));
            }
        }
        if self.n_rx == 0 || self.n_rx > u16::MAX as usize {
            bad.push(format!("n_rx must be in 1..=65535 (got {})", self.n_rx));
        }
        if self.n_subcarriers < 2 {
            bad.push(format!("n_subcarriers must be >= 2 (got {})", self.n_subcarriers));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            bad.push(format!("bandwidth_hz must be > 0 (got {})", self.bandwidth_hz));
        }
        if !(self.carrier_freq_hz > 0.0 && self.carrier_freq_hz.is_finite()) {
            bad.push(format!("carrier_freq_hz must be > 0 (got {})", self.carrier_freq_hz));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            bad.push(format!("noise_variance must be >= 0 (got {})", self.noise_variance));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(text).map_err(|e| Error::Parse {
            what: "environment config".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "environment config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: Label2D,
    pub reflectivity: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    config: EnvConfig,
    scatterers: Vec<Scatterer>,
}

/// Draw the scatterer set of a room. Fully determined by `config`.
pub fn build_environment(config: &EnvConfig) -> Result<Environment> {
    config.validate()?;
    let mut g = RngStream::new(config.seed).derive(0).generator();
    let scatterers = (0..config.n_scatterers)
        .map(|_| {
            let x = g.random::<f64>() * config.room_width;
            let y = g.random::<f64>() * config.room_depth;
            let mag = g.random_range(REFLECTIVITY_RANGE.0..REFLECTIVITY_RANGE.1);
            let phase = uniform_phase(&mut g);
            Scatterer {
                position: Label2D { x, y },
                reflectivity: Complex64::from_polar(mag, phase),
            }
        })
        .collect();
    Ok(Environment {
        config: config.clone(),
        scatterers,
    })
}

struct Path2 {
    gain: f64,
    delay: f64,
    /// Arrival point seen from the AP (UE for the direct path, else the scatterer).
    from: Label2D,
    reflectivity: Complex64,
}

impl Environment {
    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }

    pub fn wavelength(&self) -> f64 {
        self.config.wavelength()
    }

    pub fn meta(&self, created_from: impl Into<String>) -> DatasetMeta {
        DatasetMeta {
            n_subcarriers: self.config.n_subcarriers,
            n_ap: self.config.n_ap(),
            n_rx: self.config.n_rx,
            bandwidth_hz: self.config.bandwidth_hz,
            carrier_hz: self.config.carrier_freq_hz,
            created_from: created_from.into(),
        }
    }

    fn paths(&self, ap: Label2D, ue: Label2D) -> Vec<Path2> {
        let lambda = self.wavelength();
        let mut paths = Vec::with_capacity(self.scatterers.len() + 1);
        if self.config.los_enabled {
            let d = ap.distance(&ue).max(MIN_PATH_LENGTH);
            paths.push(Path2 {
                gain: lambda / (4.0 * PI * d),
                delay: d / SPEED_OF_LIGHT,
                from: ue,
                reflectivity: Complex64::new(1.0, 0.0),
            });
        }
        for s in &self.scatterers {
            let d = (ue.distance(&s.position) + s.position.distance(&ap)).max(MIN_PATH_LENGTH);
            paths.push(Path2 {
                gain: lambda / (4.0 * PI * d),
                delay: d / SPEED_OF_LIGHT,
                from: s.position,
                reflectivity: s.reflectivity,
            });
        }
        paths
    }

    /// Noise-free channel of every (AP, antenna) link for a UE at `ue`.
    pub fn channel_tensor(&self, ue: Label2D) -> Result<CsiTensor> {
        if !self.config.contains(ue) || !ue.x.is_finite() || !ue.y.is_finite() {
            return Err(Error::OutsideRoom { x: ue.x, y: ue.y });
        }
        let cfg = &self.config;
        let m_count = cfg.n_subcarriers;
        let df = cfg.bandwidth_hz / m_count as f64;
        let f0 = cfg.subcarrier_freq(0);
        let mut links = Vec::with_capacity(cfg.n_ap() * cfg.n_rx);
        let mut ramp = vec![Complex64::new(0.0, 0.0); m_count];
        for ap in &cfg.aps {
            let ap_pos = Label2D { x: ap.x, y: ap.y };
            let mut acc = vec![vec![Complex64::new(0.0, 0.0); m_count]; cfg.n_rx];
            for p in self.paths(ap_pos, ue) {
                fill_ramp(&mut ramp, f0, df, p.delay);
                let azimuth = (p.from.y - ap.y).atan2(p.from.x - ap.x);
                let spatial = (azimuth - ap.orientation_rad).sin();
                for (k, link) in acc.iter_mut().enumerate() {
                    let g = p.reflectivity * p.gain * Complex64::from_polar(1.0, -PI * k as f64 * spatial);
                    for (h, r) in link.iter_mut().zip(&ramp) {
                        *h += g * r;
                    }
                }
            }
            for link in acc {
                links.push(ComplexVec::new(link)?);
            }
        }
        CsiTensor::new(cfg.n_ap(), cfg.n_rx, links)
    }

    /// One measurement at `ue`, optionally with receiver noise drawn from `rng`.
    pub fn sample_channel(&self, ue: Label2D, noise_on: bool, rng: &RngStream) -> Result<CsiSample> {
        let clean = self.channel_tensor(ue)?;
        let sigma2 = self.config.noise_variance;
        let tensor = if noise_on && sigma2 > 0.0 {
            let mut g = rng.generator();
            clean.try_map_links(|_, _, l| {
                ComplexVec::new(l.as_slice().iter().map(|h| h + complex_normal(&mut g, sigma2)).collect())
            })?
        } else {
            clean
        };
        Ok(CsiSample::measured(tensor, ue))
    }

    /// Measurement locations for a layout.
    pub fn layout_points(&self, layout: Layout, rng: &RngStream) -> Result<Vec<Label2D>> {
        let (w, d) = (self.config.room_width, self.config.room_depth);
        let points = match layout {
            Layout::UniformGrid { spacing } => {
                if !(spacing > 0.0 && spacing.is_finite()) {
                    return Err(Error::InvalidArgument(format!("grid spacing must be > 0 (got {spacing})")));
                }
                let nx = ((w / spacing) + 1e-9).floor() as usize;
                let ny = ((d / spacing) + 1e-9).floor() as usize;
                (0..ny)
                    .flat_map(|iy| {
                        (0..nx).map(move |ix| Label2D {
                            x: (ix as f64 + 0.5) * spacing,
                            y: (iy as f64 + 0.5) * spacing,
                        })
                    })
                    .collect()
            }
            Layout::UniformRandom { n } => {
                let mut g = rng.generator();
                (0..n)
                    .map(|_| Label2D {
                        x: g.random::<f64>() * w,
                        y: g.random::<f64>() * d,
                    })
                    .collect::<Vec<_>>()
            }
        };
        if points.is_empty() {
            return Err(Error::Empty("layout yields no points inside the room".into()));
        }
        Ok(points)
    }
}

/// `ramp[m] = exp(−j2π f_m τ)` with `f_m = f0 + m·df`, rebuilt exactly every
/// 32 subcarriers to bound the recurrence drift.
fn fill_ramp(ramp: &mut [Complex64], f0: f64, df: f64, delay: f64) {
    let step = Complex64::from_polar(1.0, -TAU * df * delay);
    let mut cur = Complex64::new(1.0, 0.0);
    for (m, r) in ramp.iter_mut().enumerate() {
        if m % 32 == 0 {
            cur = Complex64::from_polar(1.0, -TAU * (f0 + m as f64 * df) * delay);
        }
        *r = cur;
        cur *= step;
    }
}

/// Frequency response of explicit `(gain, delay)` taps on the subcarrier grid
/// of `config`, ignoring geometry.
pub fn tap_response(config: &EnvConfig, taps: &[(Complex64, f64)]) -> Result<ComplexVec> {
    let m_count = config.n_subcarriers;
    if m_count < 2 {
        return Err(Error::InvalidDimension(format!("n_subcarriers must be >= 2 (got {m_count})")));
    }
    let df = config.bandwidth_hz / m_count as f64;
    let mut ramp = vec![Complex64::new(0.0, 0.0); m_count];
    let mut out = vec![Complex64::new(0.0, 0.0); m_count];
    for &(gain, delay) in taps {
        fill_ramp(&mut ramp, config.subcarrier_freq(0), df, delay);
        for (h, r) in out.iter_mut().zip(&ramp) {
            *h += gain * r;
        }
    }
    ComplexVec::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    UniformGrid { spacing: f64 },
    UniformRandom { n: usize },
}

/// Sample one measurement per layout point. Sample `i` draws its noise from
/// `rng/1/i`, so the result does not depend on thread scheduling.
pub fn make_dataset(env: &Environment, layout: Layout, noise_on: bool, rng: &RngStream) -> Result<Dataset> {
    let points = env.layout_points(layout, &rng.derive(0))?;
    let noise = rng.derive(1);
    let samples = points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| env.sample_channel(p, noise_on, &noise.derive(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let origin = format!(
        "synthetic: seed {}, {} scatterers, los {}, {:?}, noise {}",
        env.config.seed, env.config.n_scatterers, env.config.los_enabled, layout, noise_on
    );
    Dataset::new(env.meta(origin), samples)
}
