//! Train / validation / test partitions.
//!
//! A [`SplitManifest`] can only be built through a constructor that checks
//! the three index sets are pairwise disjoint and in range, so a manifest in
//! hand is always a valid partition of (part of) its dataset.
//!
//! Manifests are stored as TOML:
//!
//! ```toml
//! n_samples = 100
//! train = [4, 17, ...]
//! val = [...]
//! test = [...]
//!
//! [scheme]
//! kind = "spatial-center"   # or "random" / "spatial-side"
//! axis = "x"
//! band = [3.33, 6.67]
//! fraction = 0.333
//! val_fraction = 0.1
//! seed = 7
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Which end of the long axis a side band hugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitScheme {
    Random {
        fractions: [f64; 3],
        seed: u64,
    },
    SpatialCenter {
        axis: Axis,
        band: [f64; 2],
        fraction: f64,
        val_fraction: f64,
        seed: u64,
    },
    SpatialSide {
        axis: Axis,
        side: Side,
        band: [f64; 2],
        fraction: f64,
        val_fraction: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    n_samples: usize,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    scheme: SplitScheme,
}

impl SplitManifest {
    pub fn new(
        n_samples: usize,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
        scheme: SplitScheme,
    ) -> Result<Self> {
        let mut seen = vec![false; n_samples];
        for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
            for &i in set.iter() {
                if i >= n_samples {
                    return Err(Error::InvalidArgument(format!(
                        "{name} index {i} out of range for {n_samples} samples"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "index {i} appears in more than one split (or twice)"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(Self {
            n_samples,
            train,
            val,
            test,
            scheme,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn scheme(&self) -> &SplitScheme {
        &self.scheme
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            what: "split manifest".into(),
            message: e.to_string(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: SplitManifest = toml::from_str(text).map_err(|e| Error::Parse {
            what: "split manifest".into(),
            message: e.to_string(),
        })?;
        SplitManifest::new(raw.n_samples, raw.train, raw.val, raw.test, raw.scheme)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

fn count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Uniform shuffle by `seed`, then contiguous train / val / test blocks.
pub fn split_random(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<SplitManifest> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0)
        || fractions[0] <= 0.0
        || fractions.iter().sum::<f64>() > 1.0 + 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be non-negative, with a positive train share, summing to at most 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(seed).generator());
    let n_train = count(fractions[0], n);
    let n_val = count(fractions[1], n);
    let n_test = count(fractions[2], n);
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..n_train + n_val + n_test].to_vec();
    SplitManifest::new(n, train, val, test, SplitScheme::Random { fractions, seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Center,
    Side(Side),
}

/// Parameters of a spatial (extrapolation) split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialRequest {
    pub region: Region,
    /// Share of the long axis covered by the training band.
    pub fraction: f64,
    /// Share of the training band carved off for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl SpatialRequest {
    pub fn center() -> Self {
        Self {
            region: Region::Center,
            fraction: 1.0 / 3.0,
            val_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn side(side: Side) -> Self {
        Self {
            region: Region::Side(side),
            ..Self::center()
        }
    }

    pub fn with_fraction(mut self, fraction: f64) -> Self {
        self.fraction = fraction;
        self
    }

    pub fn with_validation(mut self, val_fraction: f64, seed: u64) -> Self {
        self.val_fraction = val_fraction;
        self.seed = seed;
        self
    }
}

/// Train on a band of the room, test on the rest.
pub fn split_spatial(dataset: &Dataset, req: SpatialRequest) -> Result<SplitManifest> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    if !(req.fraction > 0.0 && req.fraction < 1.0) || !(0.0..1.0).contains(&req.val_fraction) {
        return Err(Error::InvalidArgument(format!(
            "band fraction {} must lie in (0, 1) and validation fraction {} in [0, 1)",
            req.fraction, req.val_fraction
        )));
    }
    let labels = dataset.labels();
    let (xmin, xmax) = labels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.x), hi.max(l.x)));
    let (ymin, ymax) = labels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.y), hi.max(l.y)));
    let (axis, lo, hi) = if xmax - xmin >= ymax - ymin { (Axis::X, xmin, xmax) } else { (Axis::Y, ymin, ymax) };
    let span = hi - lo;
    if span <= 0.0 {
        return Err(Error::InvalidArgument("labels have a degenerate bounding box".into()));
    }
    let band = match req.region {
        Region::Center => [lo + span * (1.0 - req.fraction) / 2.0, lo + span * (1.0 + req.fraction) / 2.0],
        Region::Side(Side::Low) => [lo, lo + span * req.fraction],
        Region::Side(Side::High) => [hi - span * req.fraction, hi],
    };
    let coord = |i: usize| match axis {
        Axis::X => labels[i].x,
        Axis::Y => labels[i].y,
    };
    let (mut inside, outside): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| {
        let c = coord(i);
        c >= band[0] && c <= band[1]
    });
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::Empty(format!(
            "spatial band [{:.3}, {:.3}] leaves an empty train or test region",
            band[0], band[1]
        )));
    }
    inside.shuffle(&mut RngStream::new(req.seed).generator());
    let n_val = count(req.val_fraction, inside.len()).min(inside.len() - 1);
    let val: Vec<usize> = inside.drain(..n_val).collect();
    let scheme = match req.region {
        Region::Center => SplitScheme::SpatialCenter {
            axis,
            band,
            fraction: req.fraction,
            val_fraction: req.val_fraction,
            seed: req.seed,
        },
        Region::Side(side) => SplitScheme::SpatialSide {
            axis,
            side,
            band,
            fraction: req.fraction,
            val_fraction: req.val_fraction,
            seed: req.seed,
        },
    };
    SplitManifest::new(n, inside, val, outside, scheme)
}
