//! DMX tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"DMX1" | u32 element type | u32 ndim | ndim x u64 dims | row-major payload
//! ```
//!
//! Element type 1 is IEEE-754 binary32, 2 is u32. Both are 4 bytes wide and
//! the file size must be exactly header + product(dims) * 4.

use std::fs;
use std::path::Path;

use super::DatasetIoError;

pub const MAGIC: &[u8; 4] = b"DMX1";
const ELEMENT_BYTES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum ElementType {
    F32 = 1,
    U32 = 2,
}

impl ElementType {
    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(ElementType::F32),
            2 => Some(ElementType::U32),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<u64>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<u64>() as usize, data.len());
        Tensor {
            dims,
            data: TensorData::F32(data),
        }
    }

    pub fn u32(dims: Vec<u64>, data: Vec<u32>) -> Self {
        debug_assert_eq!(dims.iter().product::<u64>() as usize, data.len());
        Tensor {
            dims,
            data: TensorData::U32(data),
        }
    }

    pub fn element_type(&self) -> ElementType {
        match self.data {
            TensorData::F32(_) => ElementType::F32,
            TensorData::U32(_) => ElementType::U32,
        }
    }

    /// Number of rows (leading dimension); 0 for a scalar.
    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(0) as usize
    }

    /// Elements per row.
    pub fn row_width(&self) -> usize {
        self.dims.iter().skip(1).product::<u64>() as usize
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U32(_) => None,
        }
    }

    pub fn as_u32(&self) -> Option<&[u32]> {
        match &self.data {
            TensorData::U32(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let n: usize = match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        };
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + n * ELEMENT_BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.element_type() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8], file: &str) -> Result<Self, DatasetIoError> {
        let truncated = |expected: u64| DatasetIoError::TruncatedTensor {
            file: file.to_string(),
            expected,
            found: bytes.len() as u64,
        };
        if bytes.len() < 4 {
            return Err(DatasetIoError::BadMagic {
                file: file.to_string(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(DatasetIoError::BadMagic {
                file: file.to_string(),
            });
        }
        if bytes.len() < 12 {
            return Err(truncated(12));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let code = u32_at(4);
        let element =
            ElementType::from_code(code).ok_or_else(|| DatasetIoError::UnsupportedElementType {
                file: file.to_string(),
                code,
            })?;
        let ndim = u32_at(8) as u64;
        let header = 12 + 8 * ndim;
        if (bytes.len() as u64) < header {
            return Err(truncated(header));
        }
        let dims: Vec<u64> = (0..ndim as usize)
            .map(|i| u64::from_le_bytes(bytes[12 + 8 * i..20 + 8 * i].try_into().unwrap()))
            .collect();
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| truncated(u64::MAX))?;
        let expected = count
            .checked_mul(ELEMENT_BYTES as u64)
            .and_then(|p| p.checked_add(header))
            .ok_or_else(|| truncated(u64::MAX))?;
        let found = bytes.len() as u64;
        if found < expected {
            return Err(truncated(expected));
        }
        if found > expected {
            return Err(DatasetIoError::TrailingBytes {
                file: file.to_string(),
                expected,
                found,
            });
        }
        let body = bytes[header as usize..].chunks_exact(ELEMENT_BYTES);
        let data = match element {
            ElementType::F32 => TensorData::F32(
                body.map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            ElementType::U32 => TensorData::U32(
                body.map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Ok(Tensor { dims, data })
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor, DatasetIoError> {
    let bytes = fs::read(path).map_err(|e| DatasetIoError::io(path, e))?;
    let name = path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    );
    Tensor::decode(&bytes, &name)
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<(), DatasetIoError> {
    super::write_atomic(path, &tensor.encode())
}
