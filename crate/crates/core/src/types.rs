//! Channel containers shared by every other module.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{Error, Result};

/// Per-subcarrier (or per-delay-bin) complex channel gains of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec(Vec<Complex64>);

impl ComplexVec {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "channel vector needs at least 2 entries, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numeric(format!("non-finite channel gain at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn dft_forward(&self) -> Result<ComplexVec> {
        ComplexVec::new(dft::dft_forward(&self.0)?)
    }

    pub fn dft_inverse(&self) -> Result<ComplexVec> {
        ComplexVec::new(dft::dft_inverse(&self.0)?)
    }

    /// Mean of `|H[m]|²` over entries.
    pub fn mean_power(&self) -> f64 {
        self.0.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.0.len() as f64
    }
}

impl std::ops::Index<usize> for ComplexVec {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// `n_ap × n_rx` grid of equal-length channel vectors, stored AP-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTensor {
    n_ap: usize,
    n_rx: usize,
    links: Vec<ComplexVec>,
}

impl CsiTensor {
    pub fn new(n_ap: usize, n_rx: usize, links: Vec<ComplexVec>) -> Result<Self> {
        if n_ap == 0 || n_rx == 0 {
            return Err(Error::InvalidDimension(format!(
                "tensor needs n_ap >= 1 and n_rx >= 1, got {n_ap} x {n_rx}"
            )));
        }
        if links.len() != n_ap * n_rx {
            return Err(Error::InvalidDimension(format!(
                "expected {} link vectors, got {}",
                n_ap * n_rx,
                links.len()
            )));
        }
        let m = links[0].len();
        if links.iter().any(|l| l.len() != m) {
            return Err(Error::InvalidDimension(
                "link vectors differ in length".to_string(),
            ));
        }
        Ok(Self { n_ap, n_rx, links })
    }

    pub fn zeros(n_ap: usize, n_rx: usize, m: usize) -> Result<Self> {
        let links = (0..n_ap * n_rx)
            .map(|_| ComplexVec::zeros(m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_ap, n_rx, links)
    }

    pub fn n_ap(&self) -> usize {
        self.n_ap
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_subcarriers(&self) -> usize {
        self.links[0].len()
    }

    pub fn link(&self, ap: usize, rx: usize) -> &ComplexVec {
        &self.links[ap * self.n_rx + rx]
    }

    /// All links in AP-major, antenna-next order.
    pub fn links(&self) -> &[ComplexVec] {
        &self.links
    }

    /// Build a new tensor of the same shape from a per-link transform.
    pub fn try_map_links<F>(&self, mut f: F) -> Result<CsiTensor>
    where
        F: FnMut(usize, usize, &ComplexVec) -> Result<ComplexVec>,
    {
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| f(i / self.n_rx, i % self.n_rx, l))
            .collect::<Result<Vec<_>>>()?;
        CsiTensor::new(self.n_ap, self.n_rx, links)
    }

    /// Multiply every element of link `(ap, rx)` by `gains[ap * n_rx + rx]`.
    pub fn scale_links(&self, gains: &[Complex64]) -> Result<CsiTensor> {
        assert_eq!(gains.len(), self.links.len());
        self.try_map_links(|ap, rx, l| {
            let g = gains[ap * self.n_rx + rx];
            ComplexVec::new(l.as_slice().iter().map(|v| v * g).collect())
        })
    }

    pub fn energy(&self) -> f64 {
        self.links
            .iter()
            .flat_map(|l| l.as_slice())
            .map(|v| v.norm_sqr())
            .sum()
    }
}

/// 2-D position label in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label2D {
    pub x: f64,
    pub y: f64,
}

impl Label2D {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Numeric(format!("non-finite label ({x}, {y})")));
        }
        Ok(Self { x, y })
    }

    pub fn distance(&self, other: &Label2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Augmentation operators. The discriminant is the origin tag on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PhaseAp = 1,
    PhaseRx = 2,
    AmpAp = 3,
    AmpRx = 4,
    Corr = 5,
    Pdp1 = 6,
    Pdp2 = 7,
    Pdp3 = 8,
    Pdp4 = 9,
    Noise = 10,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::PhaseAp,
        Method::PhaseRx,
        Method::AmpAp,
        Method::AmpRx,
        Method::Corr,
        Method::Pdp1,
        Method::Pdp2,
        Method::Pdp3,
        Method::Pdp4,
        Method::Noise,
    ];

    /// Methods that resample the channel from its statistics.
    pub const CHANNEL: [Method; 5] = [
        Method::Corr,
        Method::Pdp1,
        Method::Pdp2,
        Method::Pdp3,
        Method::Pdp4,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::PhaseAp => "phase-ap",
            Method::PhaseRx => "phase-rx",
            Method::AmpAp => "amp-ap",
            Method::AmpRx => "amp-rx",
            Method::Corr => "corr",
            Method::Pdp1 => "pdp1",
            Method::Pdp2 => "pdp2",
            Method::Pdp3 => "pdp3",
            Method::Pdp4 => "pdp4",
            Method::Noise => "noise",
        }
    }

    pub fn is_transceiver(self) -> bool {
        matches!(
            self,
            Method::PhaseAp | Method::PhaseRx | Method::AmpAp | Method::AmpRx
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown augmentation method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Measured,
    Augmented(Method),
}

impl Origin {
    pub fn tag(self) -> u8 {
        match self {
            Origin::Measured => 0,
            Origin::Augmented(m) => m.tag(),
        }
    }

    pub fn from_tag(tag: u8) -> Option<Origin> {
        if tag == 0 {
            Some(Origin::Measured)
        } else {
            Method::from_tag(tag).map(Origin::Augmented)
        }
    }
}

/// One localisation example: a CSI tensor with its position label.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    tensor: CsiTensor,
    label: Label2D,
    origin: Origin,
}

impl CsiSample {
    pub fn measured(tensor: CsiTensor, label: Label2D) -> Self {
        Self {
            tensor,
            label,
            origin: Origin::Measured,
        }
    }

    pub fn with_origin(tensor: CsiTensor, label: Label2D, origin: Origin) -> Self {
        Self {
            tensor,
            label,
            origin,
        }
    }

    /// New sample produced by `method` from this one, keeping the label.
    pub fn augmented(&self, tensor: CsiTensor, method: Method) -> Self {
        Self {
            tensor,
            label: self.label,
            origin: Origin::Augmented(method),
        }
    }

    pub fn tensor(&self) -> &CsiTensor {
        &self.tensor
    }

    pub fn label(&self) -> Label2D {
        self.label
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }
}
