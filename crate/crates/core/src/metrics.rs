//! Evaluation measures: masked reconstruction error, relevance-map distance,
//! embedding similarity, and PSNR.

use thiserror::Error;

use crate::fusion::RelevanceMap;
use crate::tensors::{GrayImage, RasterImage, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("cannot compare a normalized map with a raw one")]
    NormalizationMismatch,
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Ground-truth query region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// Gray level at or above which a PGM pixel counts as inside the mask.
    pub const THRESHOLD: u8 = 128;

    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MetricsError> {
        if bits.len() != width * height {
            return Err(MetricsError::DimensionMismatch(format!(
                "mask of {width}x{height} with {} entries",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            bits: image
                .pixels()
                .iter()
                .map(|&v| v >= Self::THRESHOLD)
                .collect(),
        }
    }

    /// From a `height x width` uint8 tensor; any non-zero entry is inside.
    pub fn from_tensor(tensor: &Tensor) -> Result<Self, MetricsError> {
        let data = tensor.as_u8()?;
        match *tensor.shape() {
            [h, w] => Ok(Self {
                width: w,
                height: h,
                bits: data.iter().map(|&v| v != 0).collect(),
            }),
            _ => Err(MetricsError::DimensionMismatch(format!(
                "mask tensor of shape {:?}",
                tensor.shape()
            ))),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        let px = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::new(self.width, self.height, px).expect("dimensions match")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }
}

fn same_dims(a: &RasterImage, b: &RasterImage) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared error over the masked pixels and all three channels, in
/// 8-bit intensity units.
pub fn masked_mse(
    original: &RasterImage,
    reconstructed: &RasterImage,
    mask: &BinaryMask,
) -> Result<f64, MetricsError> {
    same_dims(original, reconstructed)?;
    if mask.width != original.width() || mask.height != original.height() {
        return Err(MetricsError::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width,
            mask.height,
            original.width(),
            original.height()
        )));
    }
    let mut sum = 0f64;
    let mut n = 0usize;
    for (p, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        let a = &original.pixels()[p * 3..p * 3 + 3];
        let b = &reconstructed.pixels()[p * 3..p * 3 + 3];
        for (x, y) in a.iter().zip(b) {
            let d = *x as f64 - *y as f64;
            sum += d * d;
        }
        n += 3;
    }
    if n == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Mean squared error over the full image.
pub fn mse(original: &RasterImage, reconstructed: &RasterImage) -> Result<f64, MetricsError> {
    same_dims(original, reconstructed)?;
    let n = original.pixels().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = original
        .pixels()
        .iter()
        .zip(reconstructed.pixels())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// Peak signal-to-noise ratio from an MSE in 8-bit units; infinite for zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(original: &RasterImage, reconstructed: &RasterImage) -> Result<f64, MetricsError> {
    Ok(psnr_from_mse(mse(original, reconstructed)?))
}

/// Mean absolute per-pixel difference between two relevance maps.
pub fn relevance_l1(a: &RelevanceMap, b: &RelevanceMap) -> Result<f64, MetricsError> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(MetricsError::DimensionMismatch(format!(
            "relevance maps {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.is_normalized() != b.is_normalized() {
        return Err(MetricsError::NormalizationMismatch);
    }
    let n = a.values().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Cosine similarity of two embeddings.
pub fn embedding_similarity(image: &[f32], text: &[f32]) -> Result<f64, MetricsError> {
    if image.len() != text.len() {
        return Err(MetricsError::DimensionMismatch(format!(
            "embeddings of length {} and {}",
            image.len(),
            text.len()
        )));
    }
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let (na, nb) = (norm(image), norm(text));
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    let dot: f64 = image
        .iter()
        .zip(text)
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
