//! Binary weight file.
//!
//! ```text
//! "DLAC" | version: u16 LE | layer count: u8 |
//!   per layer: rows: u32 LE | cols: u32 LE | rows*cols f32 LE (row-major) | rows f32 LE
//! ```
//! Hidden layers use ReLU and the final layer sigmoid; activations are not stored.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{DecisionModel, Dense};

pub const MAGIC: &[u8; 4] = b"DLAC";
pub const VERSION: u16 = 1;
const MAX_DIM: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("truncated weight file")]
    Truncated,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("trailing bytes after last layer")]
    Trailing,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serialize `model`; parameters are stored as f32.
pub fn write_weights<W: Write>(model: &DecisionModel, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[model.layers().len() as u8])?;
    for layer in model.layers() {
        out.write_all(&(layer.rows as u32).to_le_bytes())?;
        out.write_all(&(layer.cols as u32).to_le_bytes())?;
        for v in layer.weights.iter().chain(&layer.bias) {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() < n {
            return Err(FormatError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let raw = self.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

pub fn read_weights<R: Read>(mut input: R) -> Result<DecisionModel, FormatError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf };
    if cur.take(4).map_err(|_| FormatError::Magic)? != MAGIC {
        return Err(FormatError::Magic);
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let count = cur.take(1)?[0] as usize;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let rows = cur.u32()?;
        let cols = cur.u32()?;
        if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
            return Err(FormatError::Dimension(format!("layer {i} is {rows}x{cols}")));
        }
        let (rows, cols) = (rows as usize, cols as usize);
        let weights = cur.f32s(rows * cols)?;
        let bias = cur.f32s(rows)?;
        layers.push(Dense {
            rows,
            cols,
            weights,
            bias,
        });
    }
    if !cur.buf.is_empty() {
        return Err(FormatError::Trailing);
    }
    DecisionModel::new(layers).map_err(|e| FormatError::Dimension(e.to_string()))
}

pub fn save_weights(model: &DecisionModel, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let mut bytes = Vec::new();
    write_weights(model, &mut bytes)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<DecisionModel, FormatError> {
    read_weights(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(m: &DecisionModel) -> Vec<u8> {
        let mut b = Vec::new();
        write_weights(m, &mut b).unwrap();
        b
    }

    #[test]
    fn round_trip_is_exact() {
        let m = DecisionModel::seeded(&[64, 32, 16, 4], 1).unwrap();
        assert_eq!(read_weights(&bytes_of(&m)[..]).unwrap(), m);
    }

    #[test]
    fn default_architecture_fits_in_one_megabyte() {
        let m = DecisionModel::seeded(&[64, 32, 16, 4], 1).unwrap();
        let len = bytes_of(&m).len();
        assert_eq!(len, 4 + 2 + 1 + 3 * 8 + 4 * m.parameter_count());
        assert!(len < 1_048_576);
    }

    #[test]
    fn header_layout() {
        let m = DecisionModel::zeros(&[64, 4]).unwrap();
        let b = bytes_of(&m);
        assert_eq!(&b[..4], b"DLAC");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(&b[7..11], &4u32.to_le_bytes());
        assert_eq!(&b[11..15], &64u32.to_le_bytes());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let m = DecisionModel::seeded(&[64, 32, 16, 4], 2).unwrap();
        let good = bytes_of(&m);

        assert!(matches!(read_weights(&good[..good.len() - 1]), Err(FormatError::Truncated)));
        assert!(matches!(read_weights(&good[..2]), Err(FormatError::Magic)));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_weights(&bad_magic[..]), Err(FormatError::Magic)));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(read_weights(&bad_version[..]), Err(FormatError::Version(9))));

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(read_weights(&trailing[..]), Err(FormatError::Trailing)));

        // Claim 63 inputs on the first layer.
        let mut wrong_dim = good.clone();
        wrong_dim[11..15].copy_from_slice(&63u32.to_le_bytes());
        assert!(read_weights(&wrong_dim[..]).is_err());
    }
}
