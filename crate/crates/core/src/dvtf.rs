//! DVTF: the binary per-trailer clip feature file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "DVTF"
//! version u16      currently 1
//! backbone_id u16 length + that many UTF-8 bytes
//! b       u32      feature width
//! n_clips u32      row count
//! payload n_clips * b  f32, row-major
//! ```
//!
//! Files are read strictly: wrong magic or version, short payloads, trailing
//! bytes, and non-finite values are all errors. Features are stored as f32;
//! training widens to f64 on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const DVTF_MAGIC: &[u8; 4] = b"DVTF";
pub const DVTF_VERSION: u16 = 1;

/// Per-trailer sequence of clip feature vectors (`n_clips × b`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub backbone_id: String,
    pub rows: Array2<f32>,
}

impl FeatureSequence {
    pub fn new(backbone_id: impl Into<String>, rows: Array2<f32>) -> Result<Self> {
        let seq = FeatureSequence { backbone_id: backbone_id.into(), rows };
        seq.validate()?;
        Ok(seq)
    }

    pub fn n_clips(&self) -> usize {
        self.rows.nrows()
    }

    /// Feature width, `b`.
    pub fn width(&self) -> usize {
        self.rows.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips() == 0 || self.width() == 0 {
            return Err(Error::validation(format!(
                "feature sequence must be non-empty, got {}x{}",
                self.n_clips(),
                self.width()
            )));
        }
        if let Some(v) = self.rows.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("feature sequence contains non-finite value {v}")));
        }
        Ok(())
    }

    /// Widen to f64 for training and inference.
    pub fn to_f64(&self) -> Array2<f64> {
        self.rows.mapv(f64::from)
    }
}

pub fn write_features_to<W: Write>(mut w: W, seq: &FeatureSequence) -> Result<()> {
    seq.validate()?;
    let name = seq.backbone_id.as_bytes();
    if name.len() > u16::MAX as usize {
        return Err(Error::validation("backbone_id longer than 65535 bytes"));
    }
    w.write_all(DVTF_MAGIC)?;
    w.write_all(&DVTF_VERSION.to_le_bytes())?;
    w.write_all(&(name.len() as u16).to_le_bytes())?;
    w.write_all(name)?;
    w.write_all(&(seq.width() as u32).to_le_bytes())?;
    w.write_all(&(seq.n_clips() as u32).to_le_bytes())?;
    for v in seq.rows.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features_to(&mut w, seq)?;
    w.flush()?;
    Ok(())
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(format!("truncated feature file while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub fn read_features_from<R: Read>(mut r: R) -> Result<FeatureSequence> {
    let mut magic = [0u8; 4];
    read_exact_or_format(&mut r, &mut magic, "magic")?;
    if &magic != DVTF_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected \"DVTF\"")));
    }
    let mut u16buf = [0u8; 2];
    read_exact_or_format(&mut r, &mut u16buf, "version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != DVTF_VERSION {
        return Err(Error::format(format!(
            "unsupported feature file version {version}, expected {DVTF_VERSION}"
        )));
    }
    read_exact_or_format(&mut r, &mut u16buf, "backbone_id length")?;
    let name_len = u16::from_le_bytes(u16buf) as usize;
    let mut name = vec![0u8; name_len];
    read_exact_or_format(&mut r, &mut name, "backbone_id")?;
    let backbone_id = String::from_utf8(name)
        .map_err(|_| Error::format("backbone_id is not valid UTF-8"))?;
    let mut u32buf = [0u8; 4];
    read_exact_or_format(&mut r, &mut u32buf, "feature width")?;
    let b = u32::from_le_bytes(u32buf) as usize;
    read_exact_or_format(&mut r, &mut u32buf, "clip count")?;
    let n_clips = u32::from_le_bytes(u32buf) as usize;
    if b == 0 || n_clips == 0 {
        return Err(Error::format(format!("degenerate header: n_clips={n_clips}, b={b}")));
    }

    let mut payload = vec![0u8; n_clips * b * 4];
    read_exact_or_format(&mut r, &mut payload, "payload")?;
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => return Err(Error::format("trailing bytes after payload")),
    }

    let mut values = Vec::with_capacity(n_clips * b);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if !v.is_finite() {
            return Err(Error::numeric(format!("non-finite feature value {v}")));
        }
        values.push(v);
    }
    let rows = Array2::from_shape_vec((n_clips, b), values).expect("shape matches header");
    Ok(FeatureSequence { backbone_id, rows })
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    read_features_from(BufReader::new(File::open(path)?))
}
