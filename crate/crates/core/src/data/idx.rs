//! IDX files: two zero bytes, a type byte, a dimension count, big-endian
//! `u32` sizes, then the payload. Only unsigned-byte payloads are handled.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const TYPE_UBYTE: u8 = 0x08;

/// Contents of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxArray {
    /// `[n, rows·cols]`, pixel bytes scaled by 1/255.
    Images { tensor: Tensor, rows: usize, cols: usize },
    Labels(Vec<u8>),
}

fn read_u32(bytes: &[u8], at: usize) -> Result<usize> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or_else(|| Error::Idx(format!("truncated header: {} bytes", bytes.len())))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Idx(format!("truncated header: {} bytes", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != TYPE_UBYTE {
        return Err(Error::Idx(format!(
            "bad magic {:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let ndim = bytes[3] as usize;
    if ndim != 1 && ndim != 3 {
        return Err(Error::Idx(format!("unsupported dimension count {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        dims.push(read_u32(bytes, 4 + 4 * i)?);
    }
    let header = 4 + 4 * ndim;
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Idx(format!("dimensions {dims:?} overflow")))?;
    let body = &bytes[header..];
    if body.len() < payload {
        return Err(Error::Idx(format!(
            "truncated payload: expected {payload} bytes, found {}",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Idx(format!(
            "{} trailing bytes after payload",
            body.len() - payload
        )));
    }
    if ndim == 1 {
        return Ok(IdxArray::Labels(body.to_vec()));
    }
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let data = body.iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxArray::Images {
        tensor: Tensor::matrix(n, rows * cols, data)?,
        rows,
        cols,
    })
}

fn header(ndim: u8, dims: &[usize]) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, TYPE_UBYTE, ndim];
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Idx(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

/// Serializes `[n, rows·cols]` images; pixels are stored as `round(255·v)`.
pub fn write_idx_images(images: &Tensor, rows: usize, cols: usize) -> Result<Vec<u8>> {
    let (n, d) = images.rows_cols();
    if images.shape().len() != 2 || d != rows * cols {
        return Err(Error::Shape {
            op: "write_idx_images",
            lhs: images.shape().to_vec(),
            rhs: vec![rows, cols],
        });
    }
    if let Some(bad) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Idx(format!("pixel {bad} outside [0, 1]")));
    }
    let mut out = header(3, &[n, rows, cols])?;
    out.extend(images.data().iter().map(|v| (v * 255.0).round() as u8));
    Ok(out)
}

pub fn write_idx_labels(labels: &[u8]) -> Result<Vec<u8>> {
    let mut out = header(1, &[labels.len()])?;
    out.extend_from_slice(labels);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_parses_exactly() {
        let bytes = [
            0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, //
            0, 255, 51, 102, //
            255, 0, 0, 204,
        ];
        match parse_idx(&bytes).unwrap() {
            IdxArray::Images { tensor, rows, cols } => {
                assert_eq!((rows, cols), (2, 2));
                assert_eq!(tensor.shape(), &[2, 4]);
                assert_eq!(tensor.data(), &[0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 0.8]);
            }
            other => panic!("{other:?}"),
        }
        let labels = [0, 0, 8, 1, 0, 0, 0, 3, 7, 0, 9];
        assert_eq!(parse_idx(&labels).unwrap(), IdxArray::Labels(vec![7, 0, 9]));
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_idx(&[0, 0, 8]).is_err());
        assert!(parse_idx(&[0, 0, 9, 1, 0, 0, 0, 0]).is_err());
        assert!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2]), Err(Error::Idx(m)) if m.contains("truncated")));
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 1, 1, 2]), Err(Error::Idx(m)) if m.contains("trailing")));
        let huge = [0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255];
        assert!(parse_idx(&huge).is_err());
    }
}
