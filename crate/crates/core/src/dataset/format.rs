//! Binary dataset format, little-endian throughout.
//!
//! ```text
//! magic        4 bytes  "CSIA"
//! version      u16      1
//! M            u32      subcarriers
//! n_ap         u16
//! n_rx         u16
//! n_samples    u64
//! bandwidth_hz f64
//! carrier_hz   f64
//! records      n_samples times:
//!   x          f64
//!   y          f64
//!   origin     u8       0 = measured, 1..=10 = augmentation method tag
//!   tensor     n_ap·n_rx·M·2 f32, AP-major, antenna next, subcarrier last,
//!              real part before imaginary part
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{Dataset, DatasetMeta};
use crate::error::{Error, FormatError, Result};
use crate::types::{ComplexVec, CsiSample, CsiTensor, Label2D, Origin};

pub const MAGIC: [u8; 4] = *b"CSIA";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 8 + 8 + 8;

pub fn save(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_to(dataset, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_to<W: Write>(dataset: &Dataset, w: &mut W) -> std::io::Result<()> {
    let meta = dataset.meta();
    let too_big = |what: &str| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{what} does not fit the header field"));
    let m = u32::try_from(meta.n_subcarriers).map_err(|_| too_big("M"))?;
    let n_ap = u16::try_from(meta.n_ap).map_err(|_| too_big("n_ap"))?;
    let n_rx = u16::try_from(meta.n_rx).map_err(|_| too_big("n_rx"))?;
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&m.to_le_bytes())?;
    w.write_all(&n_ap.to_le_bytes())?;
    w.write_all(&n_rx.to_le_bytes())?;
    w.write_all(&(dataset.len() as u64).to_le_bytes())?;
    w.write_all(&meta.bandwidth_hz.to_le_bytes())?;
    w.write_all(&meta.carrier_hz.to_le_bytes())?;
    for s in dataset.samples() {
        let label = s.label();
        w.write_all(&label.x.to_le_bytes())?;
        w.write_all(&label.y.to_le_bytes())?;
        w.write_all(&[s.origin().tag()])?;
        for link in s.tensor().links() {
            for v in link.as_slice() {
                w.write_all(&(v.re as f32).to_le_bytes())?;
                w.write_all(&(v.im as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_from(&bytes)?;
    ds.meta.created_from = path.display().to_string();
    Ok(ds)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }
    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|b| b.try_into().expect("length checked"))
    }
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parse a dataset from an in-memory image of the file.
pub fn read_from(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = c.array().ok_or(FormatError::TruncatedHeader)?;
    if magic != MAGIC {
        return Err(FormatError::MagicMismatch { expected: MAGIC, found: magic }.into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedHeader.into());
    }
    let version = u16::from_le_bytes(c.array().unwrap());
    if version != VERSION {
        return Err(FormatError::VersionMismatch { expected: VERSION, found: version }.into());
    }
    let m = u32::from_le_bytes(c.array().unwrap()) as usize;
    let n_ap = u16::from_le_bytes(c.array().unwrap()) as usize;
    let n_rx = u16::from_le_bytes(c.array().unwrap()) as usize;
    let n_samples = u64::from_le_bytes(c.array().unwrap());
    let bandwidth_hz = f64::from_le_bytes(c.array().unwrap());
    let carrier_hz = f64::from_le_bytes(c.array().unwrap());
    if m < 2 || n_ap == 0 || n_rx == 0 {
        return Err(FormatError::Dimension(format!("header declares shape {n_ap} x {n_rx} x {m}")).into());
    }

    let per_link = m * 2 * 4;
    let record_len = 8 + 8 + 1 + n_ap * n_rx * per_link;
    let mut samples = Vec::new();
    for index in 0..n_samples {
        let rec = c.take(record_len).ok_or(FormatError::TruncatedRecord { index })?;
        let x = f64::from_le_bytes(rec[0..8].try_into().unwrap());
        let y = f64::from_le_bytes(rec[8..16].try_into().unwrap());
        let tag = rec[16];
        let origin = Origin::from_tag(tag).ok_or(FormatError::InvalidOrigin { index, tag })?;
        let links = rec[17..]
            .chunks_exact(per_link)
            .map(|chunk| {
                let vals = chunk
                    .chunks_exact(8)
                    .map(|p| {
                        let re = f32::from_le_bytes(p[0..4].try_into().unwrap());
                        let im = f32::from_le_bytes(p[4..8].try_into().unwrap());
                        Complex64::new(re as f64, im as f64)
                    })
                    .collect();
                ComplexVec::new(vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let tensor = CsiTensor::new(n_ap, n_rx, links)?;
        samples.push(CsiSample::with_origin(tensor, Label2D::new(x, y)?, origin));
    }
    if c.remaining() != 0 {
        return Err(FormatError::Dimension(format!(
            "{} trailing bytes after {n_samples} records",
            c.remaining()
        ))
        .into());
    }
    let meta = DatasetMeta {
        n_subcarriers: m,
        n_ap,
        n_rx,
        bandwidth_hz,
        carrier_hz,
        created_from: String::new(),
    };
    Dataset::new(meta, samples)
}
