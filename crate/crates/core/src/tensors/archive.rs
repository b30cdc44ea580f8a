//! Named tensor archive (`.mmta`).
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MMTA" | version: u8 | entry count: u32
//! per entry:
//!   name len: u8 | name: utf-8 | dtype: u8 (0 = f32, 1 = u8) | ndim: u8 | dims: u32 * ndim | data
//! ```
//!
//! Data is row-major with the last index fastest.

use std::io::{Read, Write};

use super::TensorError;

pub const ARCHIVE_MAGIC: &[u8; 4] = b"MMTA";
pub const ARCHIVE_VERSION: u8 = 1;
pub const MAX_NAME_LEN: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::U8 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, TensorError> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::U8),
            other => Err(TensorError::UnsupportedDtype(other)),
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }
}

/// A named, shaped, dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        data: TensorData,
    ) -> Result<Self, TensorError> {
        let name = name.into();
        validate_name(&name)?;
        let expected = element_count(&shape)?;
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                name,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { name, shape, data })
    }

    pub fn f32(
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<Self, TensorError> {
        Self::new(name, shape, TensorData::F32(data))
    }

    pub fn u8(
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<u8>,
    ) -> Result<Self, TensorError> {
        Self::new(name, shape, TensorData::U8(data))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Borrows the buffer as `f32`, failing for other dtypes.
    pub fn as_f32(&self) -> Result<&[f32], TensorError> {
        match &self.data {
            TensorData::F32(v) => Ok(v),
            TensorData::U8(_) => Err(TensorError::WrongDtype {
                name: self.name.clone(),
                expected: DType::F32,
            }),
        }
    }

    pub fn as_u8(&self) -> Result<&[u8], TensorError> {
        match &self.data {
            TensorData::U8(v) => Ok(v),
            TensorData::F32(_) => Err(TensorError::WrongDtype {
                name: self.name.clone(),
                expected: DType::U8,
            }),
        }
    }

    pub fn into_parts(self) -> (String, Vec<usize>, TensorData) {
        (self.name, self.shape, self.data)
    }

    fn encoded_len(&self) -> usize {
        1 + self.name.len() + 1 + 1 + 4 * self.shape.len() + self.len() * self.dtype().size_of()
    }
}

fn validate_name(name: &str) -> Result<(), TensorError> {
    if name.is_empty() {
        return Err(TensorError::EmptyName);
    }
    if name.len() > MAX_NAME_LEN {
        return Err(TensorError::NameTooLong(name.len()));
    }
    Ok(())
}

fn element_count(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.len() > u8::MAX as usize {
        return Err(TensorError::TooManyDims(shape.len()));
    }
    shape.iter().try_fold(1usize, |acc, &d| {
        if d > u32::MAX as usize {
            return Err(TensorError::DimTooLarge(d));
        }
        acc.checked_mul(d).ok_or(TensorError::DimTooLarge(d))
    })
}

/// Ordered collection of uniquely named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    version: u8,
    entries: Vec<Tensor>,
}

impl Default for TensorArchive {
    fn default() -> Self {
        Self::new()
    }
}

impl TensorArchive {
    pub fn new() -> Self {
        Self {
            version: ARCHIVE_VERSION,
            entries: Vec::new(),
        }
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn entries(&self) -> &[Tensor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, tensor: Tensor) -> Result<(), TensorError> {
        if self.get(tensor.name()).is_some() {
            return Err(TensorError::DuplicateName(tensor.name.clone()));
        }
        self.entries.push(tensor);
        Ok(())
    }

    /// Inserts or replaces the entry with the same name, keeping its position.
    pub fn insert(&mut self, tensor: Tensor) {
        match self.entries.iter_mut().find(|t| t.name == tensor.name) {
            Some(slot) => *slot = tensor,
            None => self.entries.push(tensor),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, TensorError> {
        self.get(name)
            .ok_or_else(|| TensorError::MissingEntry(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Serializes to the archive byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self.entries.iter().map(Tensor::encoded_len).sum();
        let mut out = Vec::with_capacity(9 + body);
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.push(self.version);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for t in &self.entries {
            out.push(t.name.len() as u8);
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype().code());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            match &t.data {
                TensorData::F32(v) => {
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                TensorData::U8(v) => out.extend_from_slice(v),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != ARCHIVE_MAGIC {
            return Err(TensorError::BadMagic);
        }
        let version = cur.u8()?;
        if version != ARCHIVE_VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        let count = cur.u32()? as usize;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = cur.u8()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| TensorError::InvalidName)?
                .to_string();
            let dtype = DType::from_code(cur.u8()?)?;
            let ndim = cur.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u32()? as usize);
            }
            let n = element_count(&shape)?;
            let nbytes = n
                .checked_mul(dtype.size_of())
                .ok_or(TensorError::Truncated)?;
            let raw = cur.take(nbytes)?;
            let data = match dtype {
                DType::F32 => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                ),
                DType::U8 => TensorData::U8(raw.to_vec()),
            };
            archive.push(Tensor::new(name, shape, data)?)?;
        }
        if cur.pos != bytes.len() {
            return Err(TensorError::TrailingBytes(bytes.len() - cur.pos));
        }
        Ok(archive)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self.pos.checked_add(n).ok_or(TensorError::Truncated)?;
        if end > self.buf.len() {
            return Err(TensorError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TensorError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Writes `archive` to `sink`, returning the number of bytes written.
pub fn write_archive<W: Write>(archive: &TensorArchive, mut sink: W) -> Result<usize, TensorError> {
    let bytes = archive.to_bytes();
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

/// Reads a whole archive from `source`. Bytes after the last entry are rejected.
pub fn read_archive<R: Read>(mut source: R) -> Result<TensorArchive, TensorError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    TensorArchive::from_bytes(&bytes)
}
