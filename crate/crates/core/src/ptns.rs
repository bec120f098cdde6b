//! PTNS binary tensor files.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"PTNS1" | u32 rank | u32 dims[rank] | u8 dtype | payload (row-major)
//! ```
//!
//! dtype: 0 = f32, 1 = u8, 2 = u16, 3 = u32.

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"PTNS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    U8 = 1,
    U16 = 2,
    U32 = 3,
}

impl DType {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::U8),
            2 => Some(DType::U16),
            3 => Some(DType::U32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 | DType::U32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
            TensorData::U16(_) => DType::U16,
            TensorData::U32(_) => DType::U32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::DimMismatch(format!(
                "tensor dims {dims:?} hold {n} elements, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn u8(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Self::new(dims, TensorData::U8(data))
    }

    pub fn u32(dims: Vec<usize>, data: Vec<u32>) -> Result<Self> {
        Self::new(dims, TensorData::U32(data))
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            _ => None,
        }
    }

    /// Integer payload widened to u32, for label and index tensors.
    pub fn to_u32(&self) -> Option<Vec<u32>> {
        match &self.data {
            TensorData::U8(v) => Some(v.iter().map(|&x| x as u32).collect()),
            TensorData::U16(v) => Some(v.iter().map(|&x| x as u32).collect()),
            TensorData::U32(v) => Some(v.clone()),
            TensorData::F32(_) => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 + 4 * self.dims.len() + 1 + self.data.len() * self.data.dtype().size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.data.dtype() as u8);
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses a PTNS byte buffer. `origin` names the source in error messages.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(origin, msg);
        let mut cur = bytes;
        let mut magic = [0u8; 5];
        cur.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(bad("bad magic (expected PTNS1)".into()));
        }
        let mut word = [0u8; 4];
        cur.read_exact(&mut word).map_err(|_| bad("truncated rank".into()))?;
        let rank = u32::from_le_bytes(word) as usize;
        if rank > 16 {
            return Err(bad(format!("implausible rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            cur.read_exact(&mut word).map_err(|_| bad("truncated dims".into()))?;
            dims.push(u32::from_le_bytes(word) as usize);
        }
        let mut code = [0u8; 1];
        cur.read_exact(&mut code).map_err(|_| bad("missing dtype".into()))?;
        let dtype = DType::from_code(code[0]).ok_or_else(|| bad(format!("unknown dtype {}", code[0])))?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("dims overflow".into()))?;
        if cur.len() != n * dtype.size() {
            return Err(bad(format!(
                "payload is {} bytes, dims {dims:?} of {dtype:?} need {}",
                cur.len(),
                n * dtype.size()
            )));
        }
        let data = match dtype {
            DType::F32 => TensorData::F32(
                cur.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(cur.to_vec()),
            DType::U16 => TensorData::U16(cur.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect()),
            DType::U32 => TensorData::U32(
                cur.chunks_exact(4)
                    .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.encode()))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn mask_to_u8(mask: &[bool]) -> Vec<u8> {
    mask.iter().map(|&b| b as u8).collect()
}
