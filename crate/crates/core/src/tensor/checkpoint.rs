//! DVTM: the binary parameter checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "DVTM"
//! version u16      currently 1
//! then one record per parameter, in store order:
//!   name  u16 length + UTF-8 bytes
//!   ndim  u8  (always 2 here, kept general)
//!   dims  ndim × u32
//!   data  Π dims × f64
//! ```
//!
//! Reading stops at a clean EOF; truncation mid-record, trailing garbage,
//! wrong magic, and non-finite values are errors. Because [`ParamStore`]
//! iterates in insertion order, saving the same parameters twice yields
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

pub const DVTM_MAGIC: &[u8; 4] = b"DVTM";
pub const DVTM_VERSION: u16 = 1;

pub fn write_params_to<W: Write>(mut w: W, params: &ParamStore) -> Result<()> {
    w.write_all(DVTM_MAGIC)?;
    w.write_all(&DVTM_VERSION.to_le_bytes())?;
    for (name, value) in params.iter() {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::validation(format!("parameter name {name:?} too long")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[2u8])?;
        let (rows, cols) = value.dim();
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        for v in value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_params(path: &Path, params: &ParamStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params_to(&mut w, params)?;
    w.flush()?;
    Ok(())
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(format!("truncated checkpoint while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

pub fn read_params_from<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut magic = [0u8; 4];
    read_exact_or_format(&mut r, &mut magic, "magic")?;
    if &magic != DVTM_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected \"DVTM\"")));
    }
    let mut u16buf = [0u8; 2];
    read_exact_or_format(&mut r, &mut u16buf, "version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != DVTM_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }

    let mut params = ParamStore::new();
    loop {
        // A record starts with the name length; clean EOF here ends the file.
        let mut len_buf = [0u8; 2];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::Io(e)),
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        read_exact_or_format(&mut r, &mut name, "parameter name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::format("parameter name is not valid UTF-8"))?;
        let mut ndim = [0u8; 1];
        read_exact_or_format(&mut r, &mut ndim, "ndim")?;
        if ndim[0] != 2 {
            return Err(Error::format(format!(
                "parameter {name:?} has ndim {}, expected 2",
                ndim[0]
            )));
        }
        let mut u32buf = [0u8; 4];
        read_exact_or_format(&mut r, &mut u32buf, "rows")?;
        let rows = u32::from_le_bytes(u32buf) as usize;
        read_exact_or_format(&mut r, &mut u32buf, "cols")?;
        let cols = u32::from_le_bytes(u32buf) as usize;
        let mut payload = vec![0u8; rows * cols * 8];
        read_exact_or_format(&mut r, &mut payload, &format!("payload of {name:?}"))?;
        let mut values = Vec::with_capacity(rows * cols);
        for chunk in payload.chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
            if !v.is_finite() {
                return Err(Error::numeric(format!("parameter {name:?} holds non-finite value {v}")));
            }
            values.push(v);
        }
        let value = Array2::from_shape_vec((rows, cols), values).expect("shape matches header");
        params.insert(name, value)?;
    }
    if params.is_empty() {
        return Err(Error::format("checkpoint holds no parameters"));
    }
    Ok(params)
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    read_params_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> ParamStore {
        let mut params = ParamStore::new();
        params.insert("reduce.w", array![[1.5, -2.25], [0.0, 3.125], [4.0, -0.5]]).unwrap();
        params.insert("reduce.b", array![[0.25, -1.75]]).unwrap();
        params
    }

    fn to_bytes(params: &ParamStore) -> Vec<u8> {
        let mut buf = Vec::new();
        write_params_to(&mut buf, params).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = sample();
        let bytes = to_bytes(&params);
        let back = read_params_from(bytes.as_slice()).unwrap();
        assert_eq!(back, params);
        // Serializing again reproduces the exact bytes.
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn order_is_preserved() {
        let back = read_params_from(to_bytes(&sample()).as_slice()).unwrap();
        assert_eq!(back.names(), vec!["reduce.w", "reduce.b"]);
    }

    #[test]
    fn truncation_mid_record_is_a_format_error() {
        let bytes = to_bytes(&sample());
        let err = read_params_from(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = to_bytes(&sample());
        bytes[1] = b'!';
        assert!(read_params_from(bytes.as_slice()).is_err());
    }

    #[test]
    fn non_finite_parameter_is_a_numeric_error() {
        let mut params = ParamStore::new();
        params.insert("w", array![[1.0]]).unwrap();
        let mut bytes = to_bytes(&params);
        let at = bytes.len() - 8;
        bytes[at..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        let err = read_params_from(bytes.as_slice()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
