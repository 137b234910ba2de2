//! Little-endian binary tensor files.
//!
//! Layout:
//! - magic: `TNSR`
//! - rank: u32
//! - dims: rank * u32
//! - data: f32 * product(dims), row-major

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

pub const MAGIC: &[u8; 4] = b"TNSR";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn into_matrix(self) -> Result<Matrix> {
        match self.dims[..] {
            [rows, cols] => Matrix::new(rows, cols, self.data),
            _ => Err(Error::Format(format!("expected rank 2, found rank {}", self.rank()))),
        }
    }

    pub fn into_vector(self) -> Result<Vector> {
        match self.dims[..] {
            [_] => Vector::new(self.data),
            _ => Err(Error::Format(format!("expected rank 1, found rank {}", self.rank()))),
        }
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Tensor {
            dims: vec![m.rows(), m.cols()],
            data: m.data().to_vec(),
        }
    }
}

impl From<&Vector> for Tensor {
    fn from(v: &Vector) -> Self {
        Tensor {
            dims: vec![v.len()],
            data: v.to_vec(),
        }
    }
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in &t.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut words = bytes.get(4..).unwrap_or_default().chunks_exact(4);
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Format("bad magic".into()));
    }
    let mut next_u32 = || {
        words
            .next()
            .map(|w| u32::from_le_bytes([w[0], w[1], w[2], w[3]]))
            .ok_or_else(|| Error::Format("truncated header".into()))
    };
    let rank = next_u32()? as usize;
    let dims = (0..rank)
        .map(|_| next_u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let numel: usize = dims.iter().product();
    let payload = &bytes[8 + 4 * rank..];
    if payload.len() != numel * 4 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, dims {:?} need {}",
            payload.len(),
            dims,
            numel * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if data.iter().any(|x| x.is_nan()) {
        return Err(Error::NaN("tensor file".into()));
    }
    Ok(Tensor { dims, data })
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    fs::write(path, encode(t))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    read(path)?.into_matrix()
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write(path, &Tensor::from(m))
}
