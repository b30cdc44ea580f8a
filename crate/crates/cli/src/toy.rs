//! Model-free relevance from a ground-truth mask.

use mmsc_core::fusion::{normalize_relevance, RelevanceMap};
use mmsc_core::metrics::BinaryMask;

use crate::error::CliError;

/// Mask indicator box-blurred with a `(2r+1)^2` window. Pixels outside the
/// image count as zero, so the divisor is always the full window area.
pub fn box_blur(mask: &BinaryMask, radius: usize) -> Vec<f32> {
    let (w, h) = (mask.width(), mask.height());
    let src: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    if radius == 0 {
        return src.iter().map(|&v| v as f32).collect();
    }
    let r = radius as isize;
    let area = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    // separable: rows, then columns
    let mut rows = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = (x as isize - r).max(0) as usize;
            let hi = ((x as isize + r) as usize).min(w - 1);
            rows[y * w + x] = src[y * w + lo..=y * w + hi].iter().sum();
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let lo = (y as isize - r).max(0) as usize;
        let hi = ((y as isize + r) as usize).min(h - 1);
        for x in 0..w {
            let s: f64 = (lo..=hi).map(|yy| rows[yy * w + x]).sum();
            out[y * w + x] = (s / area) as f32;
        }
    }
    out
}

/// Raw (unnormalized) toy relevance.
pub fn toy_raw(mask: &BinaryMask, radius: usize) -> Result<RelevanceMap, CliError> {
    Ok(RelevanceMap::new(
        mask.height(),
        mask.width(),
        box_blur(mask, radius),
        false,
    )?)
}

/// Normalized toy relevance.
pub fn toy_relevance(mask: &BinaryMask, radius: usize) -> Result<RelevanceMap, CliError> {
    Ok(normalize_relevance(&toy_raw(mask, radius)?)?)
}
