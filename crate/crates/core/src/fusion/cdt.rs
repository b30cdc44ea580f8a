//! Content-dependent transfer: residual cross-attention from text tokens onto
//! flattened visual features.

use super::{check, FusionError, PixelEmbeddings, TextEmbedding};

/// Layer normalization parameters applied to the text tokens before attention.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub scale: Vec<f32>,
    pub offset: Vec<f32>,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + self.eps).sqrt();
        x.iter()
            .zip(self.scale.iter().zip(&self.offset))
            .map(|(v, (&g, &b))| (v - mean) * inv * g as f64 + b as f64)
            .collect()
    }
}

/// One multi-head cross-attention layer. Projections are `dim x dim`,
/// row-major `[out][in]`, applied as `W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub heads: usize,
    pub query: Vec<f32>,
    pub query_bias: Vec<f32>,
    pub key: Vec<f32>,
    pub key_bias: Vec<f32>,
    pub value: Vec<f32>,
    pub value_bias: Vec<f32>,
    pub output: Vec<f32>,
    pub output_bias: Vec<f32>,
    pub pre_norm: Option<LayerNorm>,
}

impl AttentionLayer {
    /// All-zero projections; the layer then passes its input through unchanged.
    pub fn zeros(dim: usize, heads: usize) -> Self {
        Self {
            heads,
            query: vec![0.0; dim * dim],
            query_bias: vec![0.0; dim],
            key: vec![0.0; dim * dim],
            key_bias: vec![0.0; dim],
            value: vec![0.0; dim * dim],
            value_bias: vec![0.0; dim],
            output: vec![0.0; dim * dim],
            output_bias: vec![0.0; dim],
            pre_norm: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.query_bias.len()
    }

    fn validate(&self) -> Result<usize, FusionError> {
        let d = self.dim();
        if self.heads == 0 {
            return Err(FusionError::ZeroHeads);
        }
        if d == 0 || !d.is_multiple_of(self.heads) {
            return Err(FusionError::HeadsDoNotDivide {
                dim: d,
                heads: self.heads,
            });
        }
        for m in [&self.query, &self.key, &self.value, &self.output] {
            check("projection matrix length", d * d, m.len())?;
        }
        for b in [&self.key_bias, &self.value_bias, &self.output_bias] {
            check("projection bias length", d, b.len())?;
        }
        if let Some(norm) = &self.pre_norm {
            check("norm scale length", d, norm.scale.len())?;
            check("norm offset length", d, norm.offset.len())?;
        }
        Ok(d)
    }
}

fn project(weight: &[f32], bias: &[f32], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    weight
        .chunks_exact(d)
        .zip(bias)
        .map(|(row, &b)| {
            row.iter()
                .zip(x)
                .fold(b as f64, |acc, (&w, &v)| acc + w as f64 * v)
        })
        .collect()
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

struct Projected {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

fn visual_tokens(visual: &PixelEmbeddings) -> Vec<Vec<f64>> {
    (0..visual.positions())
        .map(|p| (0..visual.dim()).map(|k| visual.at(k, p) as f64).collect())
        .collect()
}

fn project_memory(layer: &AttentionLayer, memory: &[Vec<f64>]) -> Projected {
    Projected {
        keys: memory
            .iter()
            .map(|m| project(&layer.key, &layer.key_bias, m))
            .collect(),
        values: memory
            .iter()
            .map(|m| project(&layer.value, &layer.value_bias, m))
            .collect(),
    }
}

/// Per-head attention probabilities over memory positions for one query token.
fn attend(layer: &AttentionLayer, token: &[f64], mem: &Projected) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = token.len();
    let head_dim = d / layer.heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let input = match &layer.pre_norm {
        Some(norm) => norm.apply(token),
        None => token.to_vec(),
    };
    let q = project(&layer.query, &layer.query_bias, &input);
    let mut context = vec![0f64; d];
    let mut probs = Vec::with_capacity(layer.heads);
    for h in 0..layer.heads {
        let span = h * head_dim..(h + 1) * head_dim;
        let mut scores: Vec<f64> = mem
            .keys
            .iter()
            .map(|k| {
                q[span.clone()]
                    .iter()
                    .zip(&k[span.clone()])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    * scale
            })
            .collect();
        softmax_in_place(&mut scores);
        for (p, v) in scores.iter().zip(&mem.values) {
            for (c, x) in context[span.clone()].iter_mut().zip(&v[span.clone()]) {
                *c += p * x;
            }
        }
        probs.push(scores);
    }
    let out = project(&layer.output, &layer.output_bias, &context);
    (out, probs)
}

fn text_tokens(text: &TextEmbedding) -> Vec<Vec<f64>> {
    (0..text.columns())
        .map(|c| text.column(c).into_iter().map(f64::from).collect())
        .collect()
}

/// The pair of refinement layers.
#[derive(Debug, Clone, PartialEq)]
pub struct CdtWeights {
    pub layers: [AttentionLayer; 2],
}

/// Refines text tokens against visual features with two residual
/// cross-attention layers: `t <- t + Layer_j(t, visual)` for `j = 0, 1`.
pub fn cdt_refine(
    text: &TextEmbedding,
    visual: &PixelEmbeddings,
    weights: &CdtWeights,
) -> Result<TextEmbedding, FusionError> {
    if text.is_conditioned() {
        return Err(FusionError::AlreadyConditioned);
    }
    for layer in &weights.layers {
        let d = layer.validate()?;
        check("attention dim vs text", d, text.dim())?;
        check("attention dim vs visual", d, visual.dim())?;
    }
    let memory = visual_tokens(visual);
    let mut tokens = text_tokens(text);
    for layer in &weights.layers {
        let mem = project_memory(layer, &memory);
        for token in tokens.iter_mut() {
            let (delta, _) = attend(layer, token, &mem);
            for (t, dv) in token.iter_mut().zip(delta) {
                *t += dv;
            }
        }
    }
    let (d, cols) = (text.dim(), text.columns());
    let mut data = vec![0f32; d * cols];
    for (c, token) in tokens.iter().enumerate() {
        for (k, &v) in token.iter().enumerate() {
            data[k * cols + c] = v as f32;
        }
    }
    TextEmbedding::new(d, cols, data, true)
}

/// Attention probabilities of a single layer, indexed `[token][head][position]`.
pub fn attention_probabilities(
    layer: &AttentionLayer,
    text: &TextEmbedding,
    visual: &PixelEmbeddings,
) -> Result<Vec<Vec<Vec<f64>>>, FusionError> {
    let d = layer.validate()?;
    check("attention dim vs text", d, text.dim())?;
    check("attention dim vs visual", d, visual.dim())?;
    let mem = project_memory(layer, &visual_tokens(visual));
    Ok(text_tokens(text)
        .iter()
        .map(|t| attend(layer, t, &mem).1)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, d: usize, heads: usize, norm: bool) -> AttentionLayer {
        let mut mat = |n: usize| {
            (0..n)
                .map(|_| rng.gen_range(-0.5f32..0.5))
                .collect::<Vec<_>>()
        };
        AttentionLayer {
            heads,
            query: mat(d * d),
            query_bias: mat(d),
            key: mat(d * d),
            key_bias: mat(d),
            value: mat(d * d),
            value_bias: mat(d),
            output: mat(d * d),
            output_bias: mat(d),
            pre_norm: norm.then(|| LayerNorm {
                scale: (0..d).map(|i| 1.0 + 0.1 * i as f32).collect(),
                offset: (0..d).map(|i| 0.05 * i as f32).collect(),
                eps: LayerNorm::DEFAULT_EPS,
            }),
        }
    }

    fn random_inputs(
        rng: &mut ChaCha8Rng,
        d: usize,
        cols: usize,
    ) -> (TextEmbedding, PixelEmbeddings) {
        let t = (0..d * cols).map(|_| rng.gen_range(-1f32..1.0)).collect();
        let v = (0..d * 2 * 3).map(|_| rng.gen_range(-1f32..1.0)).collect();
        (
            TextEmbedding::new(d, cols, t, false).unwrap(),
            PixelEmbeddings::new(d, 2, 3, v).unwrap(),
        )
    }

    #[test]
    fn zero_weights_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (t, v) = random_inputs(&mut rng, 8, 2);
        let w = CdtWeights {
            layers: [AttentionLayer::zeros(8, 2), AttentionLayer::zeros(8, 2)],
        };
        let out = cdt_refine(&t, &v, &w).unwrap();
        assert_eq!(out.data(), t.data());
        assert!(out.is_conditioned());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for norm in [false, true] {
            let (t, v) = random_inputs(&mut rng, 8, 3);
            let layer = random_layer(&mut rng, 8, 4, norm);
            for token in attention_probabilities(&layer, &t, &v).unwrap() {
                assert_eq!(token.len(), 4);
                for head in token {
                    assert_eq!(head.len(), 6);
                    assert!(head.iter().all(|&p| p > 0.0));
                    assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    /// Straight-line reference: explicit per-head loops over plain arrays.
    fn naive_layer(layer: &AttentionLayer, t: &[f64], mem: &[Vec<f64>]) -> Vec<f64> {
        let d = t.len();
        let hd = d / layer.heads;
        let lin = |w: &[f32], b: &[f32], x: &[f64]| -> Vec<f64> {
            let mut y = vec![0.0; d];
            for o in 0..d {
                y[o] = b[o] as f64;
                for i in 0..d {
                    y[o] += w[o * d + i] as f64 * x[i];
                }
            }
            y
        };
        let x = match &layer.pre_norm {
            Some(n) => {
                let mean = t.iter().sum::<f64>() / d as f64;
                let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                (0..d)
                    .map(|i| {
                        (t[i] - mean) / (var + n.eps).sqrt() * n.scale[i] as f64
                            + n.offset[i] as f64
                    })
                    .collect()
            }
            None => t.to_vec(),
        };
        let q = lin(&layer.query, &layer.query_bias, &x);
        let ks: Vec<_> = mem
            .iter()
            .map(|m| lin(&layer.key, &layer.key_bias, m))
            .collect();
        let vs: Vec<_> = mem
            .iter()
            .map(|m| lin(&layer.value, &layer.value_bias, m))
            .collect();
        let mut ctx = vec![0.0; d];
        for h in 0..layer.heads {
            let mut s = vec![0.0; mem.len()];
            for j in 0..mem.len() {
                for e in h * hd..(h + 1) * hd {
                    s[j] += q[e] * ks[j][e];
                }
                s[j] /= (hd as f64).sqrt();
            }
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for j in 0..mem.len() {
                for e in h * hd..(h + 1) * hd {
                    ctx[e] += s[j].exp() / z * vs[j][e];
                }
            }
        }
        let o = lin(&layer.output, &layer.output_bias, &ctx);
        (0..d).map(|i| t[i] + o[i]).collect()
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (heads, norm) in [(1, false), (2, true), (4, false), (8, true)] {
            let (t, v) = random_inputs(&mut rng, 8, 2);
            let w = CdtWeights {
                layers: [
                    random_layer(&mut rng, 8, heads, norm),
                    random_layer(&mut rng, 8, heads, norm),
                ],
            };
            let got = cdt_refine(&t, &v, &w).unwrap();
            let mem: Vec<Vec<f64>> = (0..6)
                .map(|p| (0..8).map(|k| v.data()[k * 6 + p] as f64).collect())
                .collect();
            for c in 0..2 {
                let mut tok: Vec<f64> = t.column(c).iter().map(|&x| x as f64).collect();
                for layer in &w.layers {
                    tok = naive_layer(layer, &tok, &mem);
                }
                for (a, b) in got.column(c).iter().zip(&tok) {
                    assert!(
                        (*a as f64 - b).abs() <= 1e-3 * b.abs().max(1.0),
                        "{a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn error_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (t, v) = random_inputs(&mut rng, 8, 1);
        let zero_heads = CdtWeights {
            layers: [AttentionLayer::zeros(8, 0), AttentionLayer::zeros(8, 1)],
        };
        assert!(matches!(
            cdt_refine(&t, &v, &zero_heads),
            Err(FusionError::ZeroHeads)
        ));
        let uneven = CdtWeights {
            layers: [AttentionLayer::zeros(8, 3), AttentionLayer::zeros(8, 3)],
        };
        assert!(matches!(
            cdt_refine(&t, &v, &uneven),
            Err(FusionError::HeadsDoNotDivide { .. })
        ));
        let wrong_dim = CdtWeights {
            layers: [AttentionLayer::zeros(4, 1), AttentionLayer::zeros(4, 1)],
        };
        assert!(cdt_refine(&t, &v, &wrong_dim).is_err());
        let done = TextEmbedding::new(8, 1, t.data().to_vec(), true).unwrap();
        let ok = CdtWeights {
            layers: [AttentionLayer::zeros(8, 1), AttentionLayer::zeros(8, 1)],
        };
        assert!(matches!(
            cdt_refine(&done, &v, &ok),
            Err(FusionError::AlreadyConditioned)
        ));
    }
}
