//! WMAT1 checkpoint format: ASCII magic `WMAT1\n`, two little-endian u32
//! (rows, cols), then `rows * cols` little-endian f64 values, row-major.

use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"WMAT1\n";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_matrix(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let (rows, cols) = matrix.dim();
    if rows > u32::MAX as usize || cols > u32::MAX as usize {
        return Err(Error::InvalidDimension(format!(
            "matrix {rows}x{cols} exceeds the WMAT1 u32 dimension range"
        )));
    }
    let mut buf = Vec::with_capacity(MAGIC.len() + 8 + 8 * rows * cols);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for row in matrix.rows() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&buf).map_err(|e| io_err(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ConfigParse(format!(
            "{}: not a WMAT1 file",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expect = MAGIC.len() + 8 + 8 * rows * cols;
    if bytes.len() != expect {
        return Err(Error::ConfigParse(format!(
            "{}: WMAT1 payload is {} bytes, header implies {expect}",
            path.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[14..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::InvalidDimension(format!("{}: {e}", path.display())))
}
