//! Binary model checkpoints, little-endian throughout.
//!
//! ```text
//! magic                    4 bytes  "CSIM"
//! version                  u16      1
//! input_dim                u32
//! hidden_layers            u32
//! hidden_width             u32
//! dropout_p                f64
//! feature_extractor_depth  u32
//! feature_mean             input_dim f64
//! feature_std              input_dim f64
//! label_mean               2 f64
//! label_std                2 f64
//! n_params                 u64
//! params                   n_params f64, layer by layer: weights column-major
//!                          (fan_out rows × fan_in columns), then biases
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{MlpConfig, Model, Normalization};
use crate::error::{Error, FormatError, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"CSIM";
pub const MODEL_VERSION: u16 = 1;

pub fn write_model<W: Write>(model: &Model, w: &mut W) -> std::io::Result<()> {
    let c = model.config();
    let n = model.normalization();
    let as_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "dimension exceeds u32"))
    };
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&as_u32(c.input_dim)?.to_le_bytes())?;
    w.write_all(&as_u32(c.hidden_layers)?.to_le_bytes())?;
    w.write_all(&as_u32(c.hidden_width)?.to_le_bytes())?;
    w.write_all(&c.dropout_p.to_le_bytes())?;
    w.write_all(&as_u32(c.feature_extractor_depth)?.to_le_bytes())?;
    let floats = n
        .feature_mean
        .iter()
        .chain(&n.feature_std)
        .chain(&n.label_mean)
        .chain(&n.label_std);
    for v in floats {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(model.params().len() as u64).to_le_bytes())?;
    for v in model.params() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let out = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or(FormatError::TruncatedHeader)?;
        self.pos += N;
        Ok(out.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.bytes.len().saturating_sub(self.pos) / 8 < n {
            return Err(FormatError::Dimension(format!("file too short for {n} values")).into());
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take()?;
    if magic != MODEL_MAGIC {
        return Err(FormatError::MagicMismatch { expected: MODEL_MAGIC, found: magic }.into());
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != MODEL_VERSION {
        return Err(FormatError::VersionMismatch { expected: MODEL_VERSION, found: version }.into());
    }
    let config = MlpConfig {
        input_dim: r.u32()?,
        hidden_layers: r.u32()?,
        hidden_width: r.u32()?,
        dropout_p: r.f64()?,
        feature_extractor_depth: r.u32()?,
    };
    config.validate()?;
    let d = config.input_dim;
    let norm = Normalization {
        feature_mean: r.f64s(d)?,
        feature_std: r.f64s(d)?,
        label_mean: [r.f64()?, r.f64()?],
        label_std: [r.f64()?, r.f64()?],
    };
    let n = u64::from_le_bytes(r.take()?) as usize;
    if n != config.n_params() {
        return Err(FormatError::Dimension(format!("{n} parameters stored, config needs {}", config.n_params())).into());
    }
    let params = r.f64s(n)?;
    if r.pos != bytes.len() {
        return Err(FormatError::Dimension(format!("{} trailing bytes", bytes.len() - r.pos)).into());
    }
    Model::from_parts(config, norm, params)
}
