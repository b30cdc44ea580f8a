//! Tensor archive interchange and raster image I/O.

mod archive;
mod raster;

pub use archive::{
    read_archive, write_archive, DType, Tensor, TensorArchive, TensorData, ARCHIVE_MAGIC,
    ARCHIVE_VERSION, MAX_NAME_LEN,
};
pub use raster::{read_pgm, read_ppm, write_pgm, write_ppm, GrayImage, RasterImage};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u8),
    #[error("unexpected end of stream")]
    Truncated,
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("tensor name is empty")]
    EmptyName,
    #[error("tensor name is {0} bytes, limit is 255")]
    NameTooLong(usize),
    #[error("tensor name is not valid utf-8")]
    InvalidName,
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("tensor {name:?}: shape holds {expected} elements, data has {actual}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("tensor {name:?} is not {expected:?}")]
    WrongDtype { name: String, expected: DType },
    #[error("tensor has {0} dimensions, limit is 255")]
    TooManyDims(usize),
    #[error("dimension {0} does not fit the archive format")]
    DimTooLarge(usize),
    #[error("archive has no entry {0:?}")]
    MissingEntry(String),
    #[error("unsupported image format {0:?}")]
    UnsupportedFormat(String),
    #[error("unsupported maxval {0}")]
    UnsupportedMaxval(usize),
    #[error("malformed image header")]
    MalformedHeader,
    #[error("expected {expected} samples, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
