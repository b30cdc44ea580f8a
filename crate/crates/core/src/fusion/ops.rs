use super::{
    check, ClassScores, DenseSemanticMap, FusionError, MaskEmbeddings, MaskLogits,
    MaskProbabilities, PixelEmbeddings, PooledMaskFeatures, RelevanceMap, TextEmbedding,
};

/// Added to the pooling denominator so all-negative logits stay finite.
pub const MASK_POOL_EPS: f64 = 1e-6;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `logits[i, y, x] = <masks[i], pix[:, y, x]>`.
pub fn compute_mask_logits(
    pix: &PixelEmbeddings,
    masks: &MaskEmbeddings,
) -> Result<MaskLogits, FusionError> {
    check("mask embedding dim", pix.dim(), masks.dim())?;
    let n = pix.positions();
    let mut out = vec![0f32; masks.count() * n];
    let mut acc = vec![0f64; n];
    for i in 0..masks.count() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (k, &e) in masks.row(i).iter().enumerate() {
            let e = e as f64;
            let feat = &pix.data()[k * n..(k + 1) * n];
            for (a, &f) in acc.iter_mut().zip(feat) {
                *a += e * f as f64;
            }
        }
        for (o, a) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    MaskLogits::new(masks.count(), pix.height(), pix.width(), out)
}

/// Corner-aligned sample position of output index `i` in a source axis of `src` cells.
#[inline]
fn source_coord(i: usize, dst: usize, src: usize) -> (usize, usize, f64) {
    if dst <= 1 || src <= 1 {
        return (0, 0, 0.0);
    }
    let s = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
    let i0 = (s.floor() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, s - i0 as f64)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Applies the sigmoid to every logit, then resamples each mask bilinearly
/// (corner-aligned) onto a `height x width` grid.
pub fn upsample_sigmoid_masks(
    logits: &MaskLogits,
    height: usize,
    width: usize,
) -> Result<MaskProbabilities, FusionError> {
    if height < logits.height() || width < logits.width() {
        return Err(FusionError::TargetTooSmall {
            source_h: logits.height(),
            source_w: logits.width(),
            target_h: height,
            target_w: width,
        });
    }
    let (sh, sw) = (logits.height(), logits.width());
    let xs: Vec<_> = (0..width).map(|x| source_coord(x, width, sw)).collect();
    let ys: Vec<_> = (0..height).map(|y| source_coord(y, height, sh)).collect();
    let mut out = Vec::with_capacity(logits.count() * height * width);
    let mut probs = vec![0f64; sh * sw];
    for i in 0..logits.count() {
        for (p, &z) in probs.iter_mut().zip(logits.plane(i)) {
            *p = sigmoid(z as f64);
        }
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = lerp(probs[y0 * sw + x0], probs[y0 * sw + x1], fx);
                let bottom = lerp(probs[y1 * sw + x0], probs[y1 * sw + x1], fx);
                out.push(lerp(top, bottom, fy) as f32);
            }
        }
    }
    MaskProbabilities::new(logits.count(), height, width, out)
}

/// Average-pools logits onto a coarser grid whose size divides the source evenly.
pub fn downsample_logits(
    logits: &MaskLogits,
    height: usize,
    width: usize,
) -> Result<MaskLogits, FusionError> {
    let (sh, sw) = (logits.height(), logits.width());
    if height == 0 || width == 0 || sh % height != 0 || sw % width != 0 {
        return Err(FusionError::UnevenPooling {
            source_h: sh,
            source_w: sw,
            target_h: height,
            target_w: width,
        });
    }
    let (fy, fx) = (sh / height, sw / width);
    let area = (fy * fx) as f64;
    let mut out = Vec::with_capacity(logits.count() * height * width);
    for i in 0..logits.count() {
        let plane = logits.plane(i);
        for by in 0..height {
            for bx in 0..width {
                let mut acc = 0f64;
                for y in by * fy..(by + 1) * fy {
                    for x in bx * fx..(bx + 1) * fx {
                        acc += plane[y * sw + x] as f64;
                    }
                }
                out.push((acc / area) as f32);
            }
        }
    }
    MaskLogits::new(logits.count(), height, width, out)
}

/// `V[i] = sum_p sigmoid(l[i,p]) feat[:,p] / (sum_p sigmoid(l[i,p]) + eps)`.
pub fn mask_pool(
    feat: &PixelEmbeddings,
    logits: &MaskLogits,
) -> Result<PooledMaskFeatures, FusionError> {
    check("pooling grid height", feat.height(), logits.height())?;
    check("pooling grid width", feat.width(), logits.width())?;
    let n = feat.positions();
    let d = feat.dim();
    let mut out = Vec::with_capacity(logits.count() * d);
    let mut weights = vec![0f64; n];
    for i in 0..logits.count() {
        let mut total = 0f64;
        for (w, &z) in weights.iter_mut().zip(logits.plane(i)) {
            *w = sigmoid(z as f64);
            total += *w;
        }
        let denom = total + MASK_POOL_EPS;
        for k in 0..d {
            let column = &feat.data()[k * n..(k + 1) * n];
            let acc: f64 = weights
                .iter()
                .zip(column)
                .fold(0.0, |acc, (&w, &f)| acc + w * f as f64);
            out.push((acc / denom) as f32);
        }
    }
    PooledMaskFeatures::new(logits.count(), d, out)
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (&x, &y)| acc + x as f64 * y as f64)
}

/// `scores[c, i] = <V[i], T[:, c]>`.
pub fn class_scores(
    pooled: &PooledMaskFeatures,
    text: &TextEmbedding,
) -> Result<ClassScores, FusionError> {
    if !text.is_conditioned() {
        return Err(FusionError::NotConditioned);
    }
    check("text embedding dim", pooled.dim(), text.dim())?;
    let mut data = Vec::with_capacity(text.columns() * pooled.count());
    for c in 0..text.columns() {
        let t = text.column(c);
        for i in 0..pooled.count() {
            data.push(dot(pooled.row(i), &t) as f32);
        }
    }
    ClassScores::new(text.columns(), pooled.count(), data)
}

/// `S(c, y, x) = sum_i scores[c, i] * masks[i, y, x]`, masks ascending.
pub fn dense_semantic_map(
    scores: &ClassScores,
    masks: &MaskProbabilities,
) -> Result<DenseSemanticMap, FusionError> {
    check("mask count", scores.masks(), masks.count())?;
    let n = masks.height() * masks.width();
    let mut data = Vec::with_capacity(scores.classes() * n);
    let mut acc = vec![0f64; n];
    for c in 0..scores.classes() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..masks.count() {
            let s = scores.get(c, i) as f64;
            for (a, &m) in acc.iter_mut().zip(masks.plane(i)) {
                *a += s * m as f64;
            }
        }
        data.extend(acc.iter().map(|&a| a as f32));
    }
    Ok(DenseSemanticMap {
        classes: scores.classes(),
        height: masks.height(),
        width: masks.width(),
        data,
    })
}

/// Raw relevance of a single conditioned query: the one-class dense map.
pub fn relevance_map(
    text: &TextEmbedding,
    pooled: &PooledMaskFeatures,
    masks: &MaskProbabilities,
) -> Result<RelevanceMap, FusionError> {
    if text.columns() != 1 {
        return Err(FusionError::NotSingleQuery(text.columns()));
    }
    let scores = class_scores(pooled, text)?;
    let dense = dense_semantic_map(&scores, masks)?;
    RelevanceMap::new(dense.height, dense.width, dense.data, false)
}

/// Min-max scaling to `[0, 1]`; a constant map becomes 0.5 everywhere.
pub fn normalize_relevance(raw: &RelevanceMap) -> Result<RelevanceMap, FusionError> {
    if raw.is_normalized() {
        return Err(FusionError::AlreadyNormalized);
    }
    let (lo, hi) = raw
        .values()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let values = if raw.values().is_empty() || hi <= lo {
        vec![0.5; raw.values().len()]
    } else {
        let (lo, span) = (lo as f64, hi as f64 - lo as f64);
        raw.values()
            .iter()
            .map(|&v| ((v as f64 - lo) / span) as f32)
            .collect()
    };
    RelevanceMap::new(raw.height(), raw.width(), values, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pix(d: usize, h: usize, w: usize, data: Vec<f32>) -> PixelEmbeddings {
        PixelEmbeddings::new(d, h, w, data).unwrap()
    }

    #[test]
    fn zero_masks_give_zero_logits() {
        let p = pix(3, 2, 2, (0..12).map(|v| v as f32).collect());
        let m = MaskEmbeddings::new(2, 3, vec![0.0; 6]).unwrap();
        let l = compute_mask_logits(&p, &m).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_dot_product_logit() {
        let p = pix(2, 1, 1, vec![3.0, 4.0]);
        let m = MaskEmbeddings::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(compute_mask_logits(&p, &m).unwrap().data(), &[11.0]);
    }

    #[test]
    fn logit_dim_mismatch() {
        let p = pix(2, 1, 1, vec![3.0, 4.0]);
        let m = MaskEmbeddings::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            compute_mask_logits(&p, &m),
            Err(FusionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sigmoid_of_zero_upsamples_to_half() {
        let l = MaskLogits::new(2, 2, 3, vec![0.0; 12]).unwrap();
        let up = upsample_sigmoid_masks(&l, 7, 11).unwrap();
        assert!(up.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn constant_logits_are_fixed_points() {
        let c = 1.7f32;
        let l = MaskLogits::new(1, 3, 4, vec![c; 12]).unwrap();
        let up = upsample_sigmoid_masks(&l, 13, 29).unwrap();
        let expected = sigmoid(c as f64) as f32;
        assert!(up.data().iter().all(|&v| v == expected));
    }

    #[test]
    fn bilinear_two_by_two_to_four_by_four() {
        // logits chosen so that sigmoid gives 0.25, 0.5 / 0.75, 0.8
        let l = MaskLogits::new(
            1,
            2,
            2,
            vec![
                (1.0f64 / 3.0).ln() as f32,
                0.0,
                3f64.ln() as f32,
                4f64.ln() as f32,
            ],
        )
        .unwrap();
        let up = upsample_sigmoid_masks(&l, 4, 4).unwrap();
        // hand table: rows interpolate at v = 0, 1/3, 2/3, 1 between
        // top [0.25 .. 0.5] and bottom [0.75 .. 0.8]
        #[rustfmt::skip]
        let table = [
            0.25,        1.0 / 3.0,   5.0 / 12.0,  0.5,
            5.0 / 12.0,  0.4777778,   0.5388889,   0.6,
            7.0 / 12.0,  0.6222222,   0.6611111,   0.7,
            0.75,        0.7666667,   0.7833333,   0.8,
        ];
        for (got, want) in up.data().iter().zip(table) {
            assert!((*got as f64 - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn upsample_rejects_shrinking() {
        let l = MaskLogits::new(1, 4, 4, vec![0.0; 16]).unwrap();
        assert!(matches!(
            upsample_sigmoid_masks(&l, 3, 8),
            Err(FusionError::TargetTooSmall { .. })
        ));
    }

    #[test]
    fn uniform_logits_pool_to_spatial_mean() {
        let data: Vec<f32> = (0..2 * 3 * 3).map(|v| v as f32 * 0.5 - 2.0).collect();
        let f = pix(2, 3, 3, data.clone());
        // the eps term shifts the result by about eps / (9 sigmoid(c)) relative
        for c in [-2.0f32, 0.0, 3.0] {
            let l = MaskLogits::new(1, 3, 3, vec![c; 9]).unwrap();
            let v = mask_pool(&f, &l).unwrap();
            for k in 0..2 {
                let mean: f32 = data[k * 9..(k + 1) * 9].iter().sum::<f32>() / 9.0;
                assert!((v.row(0)[k] - mean).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn near_indicator_pooling_selects_location() {
        let data: Vec<f32> = (0..3 * 2 * 2).map(|v| (v as f32).sin()).collect();
        let f = pix(3, 2, 2, data.clone());
        let l = MaskLogits::new(1, 2, 2, vec![-20.0, -20.0, 20.0, -20.0]).unwrap();
        let v = mask_pool(&f, &l).unwrap();
        for k in 0..3 {
            assert!((v.row(0)[k] - data[k * 4 + 2]).abs() < 1e-4);
        }
    }

    #[test]
    fn pool_shape_mismatch() {
        let f = pix(1, 2, 2, vec![0.0; 4]);
        let l = MaskLogits::new(1, 2, 3, vec![0.0; 6]).unwrap();
        assert!(mask_pool(&f, &l).is_err());
    }

    #[test]
    fn downsample_block_average() {
        let l = MaskLogits::new(1, 2, 4, vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]).unwrap();
        let d = downsample_logits(&l, 1, 2).unwrap();
        assert_eq!(d.data(), &[2.0, 6.0]);
        assert!(downsample_logits(&l, 1, 3).is_err());
    }

    #[test]
    fn orthogonal_scores_are_zero() {
        let v = PooledMaskFeatures::new(1, 2, vec![1.0, 0.0]).unwrap();
        let t = TextEmbedding::query(vec![0.0, 3.0], true).unwrap();
        assert_eq!(class_scores(&v, &t).unwrap().data(), &[0.0]);
    }

    #[test]
    fn hand_class_score() {
        let v = PooledMaskFeatures::new(1, 2, vec![1.0, 0.0]).unwrap();
        let t = TextEmbedding::query(vec![2.0, 5.0], true).unwrap();
        assert_eq!(class_scores(&v, &t).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn class_scores_require_conditioning() {
        let v = PooledMaskFeatures::new(1, 2, vec![1.0, 0.0]).unwrap();
        let t = TextEmbedding::query(vec![2.0, 5.0], false).unwrap();
        assert!(matches!(
            class_scores(&v, &t),
            Err(FusionError::NotConditioned)
        ));
    }

    #[test]
    fn single_mask_identity_weighting() {
        let mask: Vec<f32> = vec![0.1, 0.2, 0.3, 0.9];
        let m = MaskProbabilities::new(1, 2, 2, mask.clone()).unwrap();
        let s = ClassScores::new(1, 1, vec![1.0]).unwrap();
        assert_eq!(dense_semantic_map(&s, &m).unwrap().plane(0), &mask[..]);
    }

    #[test]
    fn two_mask_hand_sum() {
        let m = MaskProbabilities::new(2, 2, 3, vec![0.5; 12]).unwrap();
        let s = ClassScores::new(1, 2, vec![2.0, -1.0]).unwrap();
        let dense = dense_semantic_map(&s, &m).unwrap();
        assert!(dense.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_query_gives_zero_map() {
        let v = PooledMaskFeatures::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = TextEmbedding::query(vec![0.0, 0.0], true).unwrap();
        let m = MaskProbabilities::new(2, 1, 2, vec![0.3, 0.4, 0.5, 0.6]).unwrap();
        let r = relevance_map(&t, &v, &m).unwrap();
        assert!(r.values().iter().all(|&x| x == 0.0));
        assert!(!r.is_normalized());
    }

    #[test]
    fn relevance_hand_product() {
        // <t, V[0]> = 2, mask 0.5 -> 1.0
        let v = PooledMaskFeatures::new(1, 2, vec![1.0, 1.0]).unwrap();
        let t = TextEmbedding::query(vec![1.5, 0.5], true).unwrap();
        let m = MaskProbabilities::new(1, 2, 2, vec![0.5; 4]).unwrap();
        let r = relevance_map(&t, &v, &m).unwrap();
        assert!(r.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn relevance_rejects_batches() {
        let v = PooledMaskFeatures::new(1, 2, vec![1.0, 1.0]).unwrap();
        let t = TextEmbedding::new(2, 2, vec![0.0; 4], true).unwrap();
        let m = MaskProbabilities::new(1, 1, 1, vec![0.5]).unwrap();
        assert!(matches!(
            relevance_map(&t, &v, &m),
            Err(FusionError::NotSingleQuery(2))
        ));
    }

    #[test]
    fn min_max_hand_values() {
        let raw = RelevanceMap::new(1, 3, vec![-1.0, 0.0, 3.0], false).unwrap();
        let n = normalize_relevance(&raw).unwrap();
        assert_eq!(n.values(), &[0.0, 0.25, 1.0]);
        assert!(n.is_normalized());
        assert!(normalize_relevance(&n).is_err());
    }

    #[test]
    fn constant_map_normalizes_to_half() {
        let raw = RelevanceMap::new(2, 2, vec![7.0; 4], false).unwrap();
        assert_eq!(normalize_relevance(&raw).unwrap().values(), &[0.5; 4]);
    }
}
