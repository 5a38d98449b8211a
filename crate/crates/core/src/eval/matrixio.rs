//! Dense binary matrix file: a small header (magic, version, rows, cols,
//! dtype) followed by row-major little-endian values. Used for feature
//! dumps and embedding exports.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"KWSM";
const VERSION: u32 = 1;
const DTYPE_F64: u32 = 1;

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut blob = Vec::with_capacity(20 + m.len() * 8);
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&VERSION.to_le_bytes());
    blob.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    blob.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    blob.extend_from_slice(&DTYPE_F64.to_le_bytes());
    for v in m.iter() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&blob))
        .map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut blob = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut blob))
        .map_err(|e| Error::io(path, e))?;
    if blob.len() < 20 || &blob[0..4] != MAGIC {
        return Err(Error::Eval(format!("{} is not a matrix file", path.display())));
    }
    let word = |i: usize| u32::from_le_bytes(blob[i..i + 4].try_into().unwrap());
    let (version, rows, cols, dtype) = (word(4), word(8) as usize, word(12) as usize, word(16));
    if version != VERSION {
        return Err(Error::Eval(format!(
            "matrix file version {version}, this build reads {VERSION}"
        )));
    }
    if dtype != DTYPE_F64 {
        return Err(Error::Eval(format!("unsupported matrix dtype {dtype}")));
    }
    if blob.len() != 20 + rows * cols * 8 {
        return Err(Error::Eval(format!(
            "matrix file {} truncated: {} bytes for {rows}x{cols}",
            path.display(),
            blob.len()
        )));
    }
    let values: Vec<f64> = blob[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Eval(e.to_string()))
}
