//! Channel- and transceiver-aware data augmentation for CSI fingerprinting.

pub mod augment;
pub mod dataset;
pub mod dft;
pub mod error;
pub mod harness;
pub mod learner;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod types;

pub use dataset::{Dataset, DatasetMeta};
pub use error::{Error, FormatError, Result};
pub use rng::RngStream;
pub use types::{ComplexVec, CsiSample, CsiTensor, Label2D, Method, Origin};
