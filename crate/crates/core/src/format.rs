//! The `HNMW` binary matrix format and fixed-precision float serialization.
//!
//! Layout: magic `HNMW`, then little-endian `u32` version (1), `u32` rows,
//! `u32` cols, followed by `rows * cols` little-endian binary32 values in
//! row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serializer;

use crate::error::{HinmError, Result};
use crate::matrix::{DenseMatrix, SaliencyMatrix};

pub const MAGIC: &[u8; 4] = b"HNMW";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn write_hnmw<W: Write>(mut out: W, matrix: &DenseMatrix) -> Result<()> {
    let rows = u32::try_from(matrix.rows())
        .map_err(|_| HinmError::Format("row count exceeds u32".into()))?;
    let cols = u32::try_from(matrix.cols())
        .map_err(|_| HinmError::Format("column count exceeds u32".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * matrix.values().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for v in matrix.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_hnmw<R: Read>(mut input: R) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_hnmw(&bytes)
}

pub fn decode_hnmw(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(HinmError::Format("truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(HinmError::Format("bad magic, expected HNMW".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(1);
    if version != VERSION {
        return Err(HinmError::Format(format!("unsupported version {version}")));
    }
    let (rows, cols) = (word(2) as usize, word(3) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| HinmError::Format("shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(HinmError::Format(format!(
            "{rows}x{cols} payload needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::new(rows, cols, values)
}

pub fn save_matrix(path: impl AsRef<Path>, matrix: &DenseMatrix) -> Result<()> {
    let file = fs::File::create(path)?;
    write_hnmw(std::io::BufWriter::new(file), matrix)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    decode_hnmw(&fs::read(path)?)
}

/// Loads an externally computed saliency map stored as HNMW and checks it
/// against the weight shape.
pub fn load_saliency(path: impl AsRef<Path>, weight_shape: (usize, usize)) -> Result<SaliencyMatrix> {
    saliency_from_matrix(&load_matrix(path)?, weight_shape)
}

pub fn saliency_from_matrix(
    matrix: &DenseMatrix,
    weight_shape: (usize, usize),
) -> Result<SaliencyMatrix> {
    if matrix.shape() != weight_shape {
        return Err(HinmError::ShapeMismatch {
            expected: weight_shape,
            actual: matrix.shape(),
        });
    }
    SaliencyMatrix::new(
        matrix.rows(),
        matrix.cols(),
        matrix.values().iter().map(|&v| f64::from(v)).collect(),
    )
}

/// Rounds to nine significant decimal digits.
pub fn round_sig9(value: f64) -> f64 {
    if !value.is_finite() || value == 0.0 {
        return value;
    }
    format!("{value:.8e}").parse().unwrap_or(value)
}

/// Serde helpers writing floats rounded to nine significant digits.
pub mod sig9 {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(round_sig9(*value))
    }

    pub fn serialize_vec<S: Serializer>(
        values: &[f64],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&round_sig9(*v))?;
        }
        seq.end()
    }

    pub fn serialize_nested<S: Serializer>(
        values: &[Vec<f64>],
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let rounded: Vec<Vec<f64>> = values
            .iter()
            .map(|row| row.iter().map(|v| round_sig9(*v)).collect())
            .collect();
        let mut seq = s.serialize_seq(Some(rounded.len()))?;
        for row in &rounded {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseMatrix {
        DenseMatrix::new(2, 3, vec![1.0, -2.5, 0.0, 3.25, 1e-7, -0.0]).unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let mut buf = Vec::new();
        write_hnmw(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[..4], b"HNMW");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..12], &[2, 0, 0, 0]);
        assert_eq!(&buf[12..16], &[3, 0, 0, 0]);
        assert_eq!(&buf[16..20], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 6 * 4);
        assert_eq!(read_hnmw(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn rejects_malformed_files() {
        let mut buf = Vec::new();
        write_hnmw(&mut buf, &sample()).unwrap();
        assert!(matches!(decode_hnmw(&buf[..10]), Err(HinmError::Format(_))));
        assert!(matches!(decode_hnmw(&buf[..buf.len() - 1]), Err(HinmError::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(decode_hnmw(&bad), Err(HinmError::Format(_))));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(decode_hnmw(&bad), Err(HinmError::Format(_))));
        let mut bad = buf;
        bad[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_hnmw(&bad), Err(HinmError::NonFinite { .. })));
    }

    #[test]
    fn saliency_loading_checks_shape_and_sign() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hnmw");
        save_matrix(&path, &DenseMatrix::new(4, 4, vec![1.0; 16]).unwrap()).unwrap();
        assert!(load_saliency(&path, (4, 4)).is_ok());
        assert!(matches!(
            load_saliency(&path, (8, 8)),
            Err(HinmError::ShapeMismatch { .. })
        ));
        let mut vals = vec![1.0; 16];
        vals[5] = -1.0;
        save_matrix(&path, &DenseMatrix::new(4, 4, vals).unwrap()).unwrap();
        assert!(matches!(
            load_saliency(&path, (4, 4)),
            Err(HinmError::NegativeScore { row: 1, col: 1, .. })
        ));
    }

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(36.0), 36.0);
        assert_eq!(round_sig9(0.1 + 0.2), 0.3);
        assert_eq!(round_sig9(1.234567891234), 1.23456789);
        assert_eq!(round_sig9(0.0), 0.0);
    }
}
