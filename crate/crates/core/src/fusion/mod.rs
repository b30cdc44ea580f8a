//! Query-conditioned relevance fusion.
//!
//! Turns exported vision and text embeddings into a per-pixel relevance map:
//! mask logits from pixel and mask embeddings, sigmoid mask probabilities on
//! the image grid, pooled mask features, text-to-mask scores, and finally the
//! score-weighted sum of mask probabilities.
//!
//! All reductions accumulate in `f64` in a fixed order (spatial row-major,
//! then mask index ascending) so results are bitwise reproducible.

mod cdt;
mod inputs;
mod ops;

pub use cdt::{attention_probabilities, cdt_refine, AttentionLayer, CdtWeights, LayerNorm};
pub use inputs::{names, FusionInputs, PIXEL_STRIDE};
pub use ops::{
    class_scores, compute_mask_logits, dense_semantic_map, downsample_logits, mask_pool,
    normalize_relevance, relevance_map, sigmoid, upsample_sigmoid_masks, MASK_POOL_EPS,
};

use thiserror::Error;

use crate::tensors::TensorError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("target {target_h}x{target_w} is smaller than source {source_h}x{source_w}")]
    TargetTooSmall {
        source_h: usize,
        source_w: usize,
        target_h: usize,
        target_w: usize,
    },
    #[error("grid {source_h}x{source_w} does not pool evenly to {target_h}x{target_w}")]
    UnevenPooling {
        source_h: usize,
        source_w: usize,
        target_h: usize,
        target_w: usize,
    },
    #[error("attention needs at least one head")]
    ZeroHeads,
    #[error("embedding dim {dim} is not divisible by {heads} heads")]
    HeadsDoNotDivide { dim: usize, heads: usize },
    #[error("text embedding must be conditioned first")]
    NotConditioned,
    #[error("text embedding is already conditioned")]
    AlreadyConditioned,
    #[error("expected a single query vector, got {0} columns")]
    NotSingleQuery(usize),
    #[error("{0} must be non-empty")]
    Empty(&'static str),
    #[error("relevance map is already normalized")]
    AlreadyNormalized,
    #[error("missing fusion input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn check(what: &'static str, expected: usize, actual: usize) -> Result<(), FusionError> {
    if expected != actual {
        return Err(FusionError::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Dense per-pixel features, layout `dim x height x width`.
///
/// Used both for the stride-4 pixel embeddings and the stride-32 backbone
/// features that masks are pooled over.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelEmbeddings {
    dim: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl PixelEmbeddings {
    pub fn new(
        dim: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, FusionError> {
        if dim == 0 || height == 0 || width == 0 {
            return Err(FusionError::Empty("pixel embeddings"));
        }
        check("pixel embedding length", dim * height * width, data.len())?;
        Ok(Self {
            dim,
            height,
            width,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    /// Feature `k` at spatial index `p` (row-major).
    #[inline]
    pub fn at(&self, k: usize, p: usize) -> f32 {
        self.data[k * self.positions() + p]
    }
}

/// Decoder mask embeddings, `count x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEmbeddings {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl MaskEmbeddings {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self, FusionError> {
        if count == 0 || dim == 0 {
            return Err(FusionError::Empty("mask embeddings"));
        }
        check("mask embedding length", count * dim, data.len())?;
        Ok(Self { count, dim, data })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Unbounded mask logits, `count x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLogits {
    count: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl MaskLogits {
    pub fn new(
        count: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, FusionError> {
        if count == 0 || height == 0 || width == 0 {
            return Err(FusionError::Empty("mask logits"));
        }
        check("mask logit length", count * height * width, data.len())?;
        Ok(Self {
            count,
            height,
            width,
            data,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }
}

/// Sigmoid mask probabilities on the image grid, `count x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProbabilities {
    count: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl MaskProbabilities {
    pub fn new(
        count: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, FusionError> {
        check(
            "mask probability length",
            count * height * width,
            data.len(),
        )?;
        Ok(Self {
            count,
            height,
            width,
            data,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }
}

/// Sigmoid-weighted mean of visual features under each mask, `count x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledMaskFeatures {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl PooledMaskFeatures {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self, FusionError> {
        if count == 0 || dim == 0 {
            return Err(FusionError::Empty("pooled mask features"));
        }
        check("pooled feature length", count * dim, data.len())?;
        Ok(Self { count, dim, data })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Text embedding(s), `dim x columns`; one column per prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    dim: usize,
    columns: usize,
    data: Vec<f32>,
    conditioned: bool,
}

impl TextEmbedding {
    pub fn new(
        dim: usize,
        columns: usize,
        data: Vec<f32>,
        conditioned: bool,
    ) -> Result<Self, FusionError> {
        if dim == 0 || columns == 0 {
            return Err(FusionError::Empty("text embedding"));
        }
        check("text embedding length", dim * columns, data.len())?;
        Ok(Self {
            dim,
            columns,
            data,
            conditioned,
        })
    }

    /// A single query vector.
    pub fn query(vector: Vec<f32>, conditioned: bool) -> Result<Self, FusionError> {
        let dim = vector.len();
        Self::new(dim, 1, vector, conditioned)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_conditioned(&self) -> bool {
        self.conditioned
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.dim)
            .map(|k| self.data[k * self.columns + c])
            .collect()
    }
}

/// Per-mask scores, `classes x masks`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    classes: usize,
    masks: usize,
    data: Vec<f32>,
}

impl ClassScores {
    pub fn new(classes: usize, masks: usize, data: Vec<f32>) -> Result<Self, FusionError> {
        check("class score length", classes * masks, data.len())?;
        Ok(Self {
            classes,
            masks,
            data,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn masks(&self) -> usize {
        self.masks
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, i: usize) -> f32 {
        self.data[c * self.masks + i]
    }
}

/// Per-class dense maps, `classes x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSemanticMap {
    classes: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DenseSemanticMap {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Per-pixel query relevance, `height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
    normalized: bool,
}

impl RelevanceMap {
    pub fn new(
        height: usize,
        width: usize,
        values: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, FusionError> {
        check("relevance map length", height * width, values.len())?;
        Ok(Self {
            height,
            width,
            values,
            normalized,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}
