//! Matrix files.
//!
//! Binary layout: the magic bytes `RUTV`, then `rows` and `cols` as u64
//! little-endian, then `rows * cols` f64 little-endian values in column-major
//! order. The CSV form has one matrix row per line, comma-separated.
//! Readers reject non-finite entries.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"RUTV";
const HEADER: usize = 4 + 8 + 8;

pub fn to_rutv_bytes(a: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * a.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(a.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.cols() as u64).to_le_bytes());
    for x in a.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn check_finite(a: &Matrix) -> Result<()> {
    match a.as_slice().iter().position(|x| !x.is_finite()) {
        Some(k) => Err(Error::Format(format!(
            "non-finite entry at ({}, {})",
            k % a.rows().max(1),
            k / a.rows().max(1)
        ))),
        None => Ok(()),
    }
}

pub fn from_rutv_bytes(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing RUTV header".into()));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
    let (rows, cols) = (word(4), word(12));
    let len = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n == (bytes.len() - HEADER) as u64)
        .ok_or_else(|| {
            Error::Format(format!(
                "{rows}x{cols} header does not match {} payload bytes",
                bytes.len() - HEADER
            ))
        })?;
    let data = bytes[HEADER..HEADER + len as usize]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let a = Matrix::from_col_major(rows as usize, cols as usize, data)?;
    check_finite(&a)?;
    Ok(a)
}

pub fn write_rutv(a: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_rutv_bytes(a))?;
    Ok(())
}

pub fn read_rutv(path: impl AsRef<Path>) -> Result<Matrix> {
    from_rutv_bytes(&fs::read(path)?)
}

pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number {:?}", ln + 1, f.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty CSV matrix".into()));
    }
    let a = Matrix::from_rows(&rows).map_err(|e| Error::Format(e.to_string()))?;
    check_finite(&a)?;
    Ok(a)
}

/// Values are written with Rust's shortest round-trip formatting, so reading
/// the file back reproduces every bit.
pub fn write_csv(a: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for i in 0..a.rows() {
        let line: Vec<String> = (0..a.cols()).map(|j| format!("{:?}", a[(i, j)])).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_csv(&fs::read_to_string(path)?)
}

/// Reads either format, choosing by the magic bytes.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        from_rutv_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Format("neither RUTV nor CSV".into()))?;
        parse_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::generate_normal_random;
    use crate::rng::RngState;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let a = generate_normal_random(&mut RngState::new(1), 5, 3);
        let bytes = to_rutv_bytes(&a);
        assert_eq!(&bytes[..4], b"RUTV");
        assert_eq!(bytes.len(), 20 + 15 * 8);
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 5);
        assert_eq!(from_rutv_bytes(&bytes).unwrap(), a);
    }

    #[test]
    fn bad_binary_inputs() {
        assert!(from_rutv_bytes(b"RUTX\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
        let mut bytes = to_rutv_bytes(&Matrix::identity(2));
        bytes.pop();
        assert!(from_rutv_bytes(&bytes).is_err());
        let mut a = Matrix::identity(2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(from_rutv_bytes(&to_rutv_bytes(&a)), Err(Error::Format(_))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let a = generate_normal_random(&mut RngState::new(2), 4, 6);
        write_csv(&a, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), a);
        assert_eq!(read_matrix(&path).unwrap(), a);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_csv("1,2\n3").is_err());
        assert!(parse_csv("1,x").is_err());
        assert!(parse_csv("1,inf").is_err());
        assert!(parse_csv("").is_err());
        assert_eq!(parse_csv("1, 2\n3,4\n").unwrap(), Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    }
}
