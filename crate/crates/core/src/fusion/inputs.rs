//! Binding between reserved archive entry names and fusion inputs.

use super::{
    cdt_refine, compute_mask_logits, downsample_logits, mask_pool, relevance_map,
    upsample_sigmoid_masks, AttentionLayer, CdtWeights, FusionError, LayerNorm, MaskEmbeddings,
    MaskLogits, PixelEmbeddings, PooledMaskFeatures, RelevanceMap, TextEmbedding,
};
use crate::tensors::{Tensor, TensorArchive, TensorData};

/// Reserved archive entry names.
pub mod names {
    pub const PIXEL_EMBEDDINGS: &str = "e_pixel_s4";
    pub const BACKBONE_S32: &str = "f3_s32";
    pub const MASK_EMBEDDINGS: &str = "e_mask";
    pub const MASK_LOGITS: &str = "mask_logits_s4";
    pub const MASK_LOGITS_S32: &str = "mask_logits_s32";
    pub const POOLED: &str = "v_pooled";
    pub const TEXT_RAW: &str = "t_raw";
    pub const TEXT_CONDITIONED: &str = "t_hat";
    pub const RELEVANCE_REF: &str = "s_inf_ref";
    pub const RELEVANCE: &str = "s_inf";
    pub const CLIP_IMAGE: &str = "clip_img_emb";
    pub const CLIP_IMAGE_RECON: &str = "clip_img_emb_recon";
    pub const CLIP_TEXT: &str = "clip_txt_emb";
    pub const GT_MASK: &str = "gt_mask";
    pub const CDT_HEADS: &str = "cdt_heads";
    pub const CDT_NORM: &str = "cdt_norm";

    /// Name of a per-layer refinement parameter, e.g. `cdt_w0_q`.
    pub fn cdt(layer: usize, param: &str) -> String {
        format!("cdt_w{layer}_{param}")
    }
}

/// Feature-grid stride of the pixel embeddings relative to the image.
pub const PIXEL_STRIDE: usize = 4;

fn f32_tensor(t: &Tensor, rank: usize) -> Result<(&[usize], &[f32]), FusionError> {
    if t.shape().len() != rank {
        return Err(FusionError::DimensionMismatch {
            what: "tensor rank",
            expected: rank,
            actual: t.shape().len(),
        });
    }
    Ok((t.shape(), t.as_f32()?))
}

fn grid(t: &Tensor) -> Result<PixelEmbeddings, FusionError> {
    let (s, d) = f32_tensor(t, 3)?;
    PixelEmbeddings::new(s[0], s[1], s[2], d.to_vec())
}

fn logits(t: &Tensor) -> Result<MaskLogits, FusionError> {
    let (s, d) = f32_tensor(t, 3)?;
    MaskLogits::new(s[0], s[1], s[2], d.to_vec())
}

fn vector(t: &Tensor) -> Result<Vec<f32>, FusionError> {
    let data = t.as_f32()?;
    match t.shape() {
        [_] => Ok(data.to_vec()),
        [_, 1] | [1, _] => Ok(data.to_vec()),
        other => Err(FusionError::DimensionMismatch {
            what: "query vector rank",
            expected: 1,
            actual: other.len(),
        }),
    }
}

fn scalar(t: &Tensor) -> Result<f64, FusionError> {
    if t.len() != 1 {
        return Err(FusionError::DimensionMismatch {
            what: "scalar element count",
            expected: 1,
            actual: t.len(),
        });
    }
    Ok(match t.data() {
        TensorData::F32(v) => v[0] as f64,
        TensorData::U8(v) => v[0] as f64,
    })
}

fn load_layer(
    archive: &TensorArchive,
    j: usize,
    heads: usize,
    norm: bool,
) -> Result<AttentionLayer, FusionError> {
    let get = |p: &str| -> Result<Vec<f32>, FusionError> {
        Ok(archive.require(&names::cdt(j, p))?.as_f32()?.to_vec())
    };
    let pre_norm = if norm {
        Some(LayerNorm {
            scale: get("norm_scale")?,
            offset: get("norm_offset")?,
            eps: LayerNorm::DEFAULT_EPS,
        })
    } else {
        None
    };
    Ok(AttentionLayer {
        heads,
        query: get("q")?,
        query_bias: get("bq")?,
        key: get("k")?,
        key_bias: get("bk")?,
        value: get("v")?,
        value_bias: get("bv")?,
        output: get("o")?,
        output_bias: get("bo")?,
        pre_norm,
    })
}

/// Fusion tensors found in an archive. Each stage prefers a precomputed entry
/// and otherwise derives it from the earlier ones.
#[derive(Debug, Clone, Default)]
pub struct FusionInputs {
    pub pixel: Option<PixelEmbeddings>,
    pub backbone: Option<PixelEmbeddings>,
    pub mask_embeddings: Option<MaskEmbeddings>,
    pub mask_logits: Option<MaskLogits>,
    pub mask_logits_s32: Option<MaskLogits>,
    pub pooled: Option<PooledMaskFeatures>,
    pub text_raw: Option<TextEmbedding>,
    pub text_conditioned: Option<TextEmbedding>,
    pub cdt: Option<CdtWeights>,
    pub reference: Option<RelevanceMap>,
}

impl FusionInputs {
    pub fn from_archive(archive: &TensorArchive) -> Result<Self, FusionError> {
        let mut inputs = FusionInputs::default();
        if let Some(t) = archive.get(names::PIXEL_EMBEDDINGS) {
            inputs.pixel = Some(grid(t)?);
        }
        if let Some(t) = archive.get(names::BACKBONE_S32) {
            inputs.backbone = Some(grid(t)?);
        }
        if let Some(t) = archive.get(names::MASK_EMBEDDINGS) {
            let (s, d) = f32_tensor(t, 2)?;
            inputs.mask_embeddings = Some(MaskEmbeddings::new(s[0], s[1], d.to_vec())?);
        }
        if let Some(t) = archive.get(names::MASK_LOGITS) {
            inputs.mask_logits = Some(logits(t)?);
        }
        if let Some(t) = archive.get(names::MASK_LOGITS_S32) {
            inputs.mask_logits_s32 = Some(logits(t)?);
        }
        if let Some(t) = archive.get(names::POOLED) {
            let (s, d) = f32_tensor(t, 2)?;
            inputs.pooled = Some(PooledMaskFeatures::new(s[0], s[1], d.to_vec())?);
        }
        if let Some(t) = archive.get(names::TEXT_RAW) {
            inputs.text_raw = Some(TextEmbedding::query(vector(t)?, false)?);
        }
        if let Some(t) = archive.get(names::TEXT_CONDITIONED) {
            inputs.text_conditioned = Some(TextEmbedding::query(vector(t)?, true)?);
        }
        if archive.contains(&names::cdt(0, "q")) {
            let heads = match archive.get(names::CDT_HEADS) {
                Some(t) => scalar(t)? as usize,
                None => 1,
            };
            let norm = match archive.get(names::CDT_NORM) {
                Some(t) => scalar(t)? != 0.0,
                None => false,
            };
            inputs.cdt = Some(CdtWeights {
                layers: [
                    load_layer(archive, 0, heads, norm)?,
                    load_layer(archive, 1, heads, norm)?,
                ],
            });
        }
        if let Some(t) = archive.get(names::RELEVANCE_REF) {
            let (s, d) = f32_tensor(t, 2)?;
            inputs.reference = Some(RelevanceMap::new(s[0], s[1], d.to_vec(), false)?);
        }
        Ok(inputs)
    }

    /// Mask logits on the pixel-embedding grid.
    pub fn mask_logits(&self) -> Result<MaskLogits, FusionError> {
        if let Some(l) = &self.mask_logits {
            return Ok(l.clone());
        }
        match (&self.pixel, &self.mask_embeddings) {
            (Some(p), Some(m)) => compute_mask_logits(p, m),
            _ => Err(FusionError::MissingInput(format!(
                "{} or ({} and {})",
                names::MASK_LOGITS,
                names::PIXEL_EMBEDDINGS,
                names::MASK_EMBEDDINGS
            ))),
        }
    }

    /// The refined query vector, running refinement if only the raw one is present.
    pub fn conditioned_text(&self) -> Result<TextEmbedding, FusionError> {
        if let Some(t) = &self.text_conditioned {
            return Ok(t.clone());
        }
        match (&self.text_raw, &self.cdt, &self.backbone) {
            (Some(t), Some(w), Some(f3)) => cdt_refine(t, f3, w),
            _ => Err(FusionError::MissingInput(format!(
                "{} or ({}, cdt weights and {})",
                names::TEXT_CONDITIONED,
                names::TEXT_RAW,
                names::BACKBONE_S32
            ))),
        }
    }

    /// Pooled mask features, pooling the backbone grid if none were exported.
    pub fn pooled_features(&self, logits: &MaskLogits) -> Result<PooledMaskFeatures, FusionError> {
        if let Some(v) = &self.pooled {
            return Ok(v.clone());
        }
        let f3 = self.backbone.as_ref().ok_or_else(|| {
            FusionError::MissingInput(format!("{} or {}", names::POOLED, names::BACKBONE_S32))
        })?;
        let coarse = match &self.mask_logits_s32 {
            Some(l) => l.clone(),
            None => downsample_logits(logits, f3.height(), f3.width())?,
        };
        mask_pool(f3, &coarse)
    }

    /// Image-grid size implied by the inputs when no image is supplied.
    pub fn default_grid(&self) -> Result<(usize, usize), FusionError> {
        if let Some(r) = &self.reference {
            return Ok((r.height(), r.width()));
        }
        let l = self.mask_logits()?;
        Ok((l.height() * PIXEL_STRIDE, l.width() * PIXEL_STRIDE))
    }

    /// Raw relevance map on a `height x width` grid.
    pub fn relevance(&self, height: usize, width: usize) -> Result<RelevanceMap, FusionError> {
        let logits = self.mask_logits()?;
        let text = self.conditioned_text()?;
        let pooled = self.pooled_features(&logits)?;
        let masks = upsample_sigmoid_masks(&logits, height, width)?;
        relevance_map(&text, &pooled, &masks)
    }
}
