//! Compact binary grid format shared by the spectral and phase-space
//! exports.
//!
//! Layout (little-endian throughout): magic `CJGR`, version u16, kind u8
//! (0 = real f64, 1 = complex f64 pairs), reserved u8, rows u32, cols u32,
//! then the row axis (rows × f64), the column axis (cols × f64), and the
//! values row-major (re or re,im per cell).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CJGR";

fn push_f64s(out: &mut Vec<u8>, vals: impl Iterator<Item = f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("grid payload truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

fn header(kind: u8, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&1u16.to_le_bytes());
    out.push(kind);
    out.push(0);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out
}

fn parse_header(bytes: &[u8], want_kind: u8) -> Result<(usize, usize, Reader<'_>)> {
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("missing CJGR header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != 1 {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    if bytes[6] != want_kind {
        return Err(Error::Format(format!(
            "grid kind {} does not match expected {want_kind}",
            bytes[6]
        )));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    Ok((rows, cols, Reader { bytes, pos: 16 }))
}

pub fn encode_real(row_axis: &[f64], col_axis: &[f64], values: &DMatrix<f64>) -> Vec<u8> {
    let mut out = header(0, values.nrows(), values.ncols());
    push_f64s(&mut out, row_axis.iter().copied());
    push_f64s(&mut out, col_axis.iter().copied());
    for r in 0..values.nrows() {
        push_f64s(&mut out, (0..values.ncols()).map(|c| values[(r, c)]));
    }
    out
}

pub fn decode_real(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let (rows, cols, mut rd) = parse_header(bytes, 0)?;
    let row_axis = rd.f64s(rows)?;
    let col_axis = rd.f64s(cols)?;
    let flat = rd.f64s(rows * cols)?;
    Ok((
        row_axis,
        col_axis,
        DMatrix::from_row_slice(rows, cols, &flat),
    ))
}

pub fn encode_complex(row_axis: &[f64], col_axis: &[f64], values: &DMatrix<Complex64>) -> Vec<u8> {
    let mut out = header(1, values.nrows(), values.ncols());
    push_f64s(&mut out, row_axis.iter().copied());
    push_f64s(&mut out, col_axis.iter().copied());
    for r in 0..values.nrows() {
        for c in 0..values.ncols() {
            out.extend_from_slice(&values[(r, c)].re.to_le_bytes());
            out.extend_from_slice(&values[(r, c)].im.to_le_bytes());
        }
    }
    out
}

pub fn decode_complex(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>, DMatrix<Complex64>)> {
    let (rows, cols, mut rd) = parse_header(bytes, 1)?;
    let row_axis = rd.f64s(rows)?;
    let col_axis = rd.f64s(cols)?;
    let flat = rd.f64s(rows * cols * 2)?;
    let values = DMatrix::from_fn(rows, cols, |r, c| {
        let i = 2 * (r * cols + c);
        Complex64::new(flat[i], flat[i + 1])
    });
    Ok((row_axis, col_axis, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_round_trip() {
        let m = DMatrix::from_fn(3, 4, |r, c| (r * 10 + c) as f64 * 0.25);
        let bytes = encode_real(&[0.0, 1.0, 2.0], &[5.0, 6.0, 7.0, 8.0], &m);
        let (ra, ca, back) = decode_real(&bytes).unwrap();
        assert_eq!(ra, vec![0.0, 1.0, 2.0]);
        assert_eq!(ca, vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(back, m);
    }

    #[test]
    fn complex_round_trip() {
        let m = DMatrix::from_fn(2, 2, |r, c| Complex64::new(r as f64, -(c as f64)));
        let bytes = encode_complex(&[0.0, 1.0], &[2.0, 3.0], &m);
        let (_, _, back) = decode_complex(&bytes).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let bytes = encode_real(&[0.0], &[0.0], &m);
        assert!(decode_complex(&bytes).is_err());
    }
}
