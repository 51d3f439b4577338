//! Multi-head scaled dot-product attention with an optional token mask.
//!
//! Masked keys are skipped outright rather than given a large negative logit,
//! so a query's output never depends on values outside its mask.

use ndarray::{s, Array2};
use rand::Rng;
use rayon::prelude::*;

use super::layers::{LayerNorm, Linear};
use super::{TokenLayout, TokenSequence};
use crate::bitmask::BitMatrix;
use crate::epipolar::EpipolarMaskSet;
use crate::error::{Error, Result};

/// Query-by-key visibility. A token always sees itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMask {
    pub bits: BitMatrix,
}

impl TokenMask {
    pub fn all(n: usize) -> Self {
        TokenMask {
            bits: BitMatrix::filled(n, n),
        }
    }

    /// Tokens see only tokens of the same frame group.
    pub fn per_frame(layout: &TokenLayout) -> Self {
        let n = layout.len();
        let mut bits = BitMatrix::new(n, n);
        for q in 0..n {
            for k in 0..n {
                if layout.position(q).0 == layout.position(k).0 {
                    bits.set(q, k, true);
                }
            }
        }
        TokenMask { bits }
    }

    /// Token `(i, a)` sees token `(k, b)` when pixel `b` of frame `k` lies
    /// in the epipolar band of pixel `a` of frame `i`. The mask set must be
    /// built at the token grid resolution.
    pub fn from_epipolar(set: &EpipolarMaskSet, layout: &TokenLayout) -> Result<Self> {
        let (t, h, w) = layout.grid();
        if layout.temporal_patch != 1 || set.n_frames != t || set.height != h || set.width != w {
            return Err(Error::LayoutMismatch(format!(
                "mask set {}x{}x{} vs token grid {t}x{h}x{w}",
                set.n_frames, set.height, set.width
            )));
        }
        let per = h * w;
        let n = layout.len();
        let mut bits = BitMatrix::new(n, n);
        for i in 0..t {
            for k in 0..t {
                let pair = set.pair(i, k);
                for a in 0..per {
                    for b in 0..per {
                        if pair.bits.get(a, b) {
                            bits.set(i * per + a, k * per + b, true);
                        }
                    }
                }
            }
        }
        Ok(TokenMask { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.rows() == 0
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        query == key || self.bits.get(query, key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub norm: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
}

impl AttentionParams {
    pub fn random(width: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::InvalidArgument(format!("width {width} not divisible by {heads} heads")));
        }
        Ok(AttentionParams {
            heads,
            norm: LayerNorm::new(width),
            wq: Linear::random(width, width, false, rng),
            wk: Linear::random(width, width, false, rng),
            wv: Linear::random(width, width, false, rng),
            wo: Linear::random(width, width, false, rng),
        })
    }
}

/// Attention over `L x d` inputs, including the output projection.
pub fn attention(x: &Array2<f64>, params: &AttentionParams, mask: Option<&TokenMask>) -> Result<Array2<f64>> {
    let (len, d) = x.dim();
    if let Some(m) = mask {
        if m.len() != len {
            return Err(Error::LayoutMismatch(format!("mask for {} tokens, sequence has {len}", m.len())));
        }
    }
    let q = params.wq.forward(x);
    let k = params.wk.forward(x);
    let v = params.wv.forward(x);
    let dh = d / params.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let rows: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map(|qi| {
            let keys: Vec<usize> = (0..len).filter(|&ki| mask.is_none_or(|m| m.allows(qi, ki))).collect();
            let mut out = vec![0.0; d];
            let mut logits = vec![0.0; keys.len()];
            for h in 0..params.heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![qi, cols.clone()]);
                for (l, &ki) in logits.iter_mut().zip(&keys) {
                    *l = qh.dot(&k.slice(s![ki, cols.clone()])) * scale;
                }
                let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                let mut denom = 0.0;
                for l in logits.iter_mut() {
                    *l = (*l - max).exp();
                    denom += *l;
                }
                for (l, &ki) in logits.iter().zip(&keys) {
                    let wgt = l / denom;
                    for (o, vv) in out[cols.clone()].iter_mut().zip(v.slice(s![ki, cols.clone()])) {
                        *o += wgt * vv;
                    }
                }
            }
            out
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let heads = Array2::from_shape_vec((len, d), flat).expect("row lengths");
    Ok(params.wo.forward(&heads))
}

/// Pre-norm residual attention block.
pub fn attention_block(x: &TokenSequence, params: &AttentionParams, mask: Option<&TokenMask>) -> Result<TokenSequence> {
    let y = attention(&params.norm.forward(&x.tokens), params, mask)?;
    Ok(x.with_tokens(&x.tokens + &y))
}
