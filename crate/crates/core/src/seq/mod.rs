//! Toy hybrid sequence backbone over patch tokens.
//!
//! Latent, ray and depth volumes are patchified onto a shared token grid,
//! fused by a linear projection and passed through alternating selective-scan
//! and (optionally epipolar-masked) attention blocks. A transposed-convolution
//! decoder maps the tokens back to a per-pixel Gaussian feature map.

mod attention;
mod decoder;
mod layers;
mod patch;
mod ssm;
mod stack;

pub use attention::{attention, attention_block, AttentionParams, TokenMask};
pub use decoder::{decode_backward, train_decoder, ConvTranspose3d, Decoder, DecoderConfig, DecoderTrainConfig};
pub use layers::{LayerNorm, Linear};
pub use patch::{
    depth_volume, fuse_tokens, patchify_latent, patchify_rays, unpatchify_latent, unpatchify_rays, LatentVolume,
};
pub use ssm::{bidirectional_scan, ssm_block, ssm_scan, ssm_scan_chunked, ScanDirection, SsmParams, SCAN_CHUNK};
pub use stack::{run_stack, BlockKind, HybridStack, HybridStackConfig, Layer};
pub(crate) use stack::{collect_tensors, load_tensors, visit_linear};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Maps token indices to `(frame group, patch row, patch col)`.
///
/// Tokens are ordered frame-major, then row-major over the patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    /// Frames of the source volume.
    pub frames: usize,
    /// Pixel height and width of the source volume.
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub temporal_patch: usize,
}

impl TokenLayout {
    pub fn new(frames: usize, height: usize, width: usize, patch: usize, temporal_patch: usize) -> Result<Self> {
        if patch == 0 || temporal_patch == 0 {
            return Err(Error::ShapeMismatch("patch sizes must be positive".into()));
        }
        if height % patch != 0 || width % patch != 0 {
            return Err(Error::ShapeMismatch(format!("{height}x{width} not divisible by patch {patch}")));
        }
        if frames % temporal_patch != 0 {
            return Err(Error::ShapeMismatch(format!("{frames} frames not divisible by temporal patch {temporal_patch}")));
        }
        Ok(TokenLayout {
            frames,
            height,
            width,
            patch,
            temporal_patch,
        })
    }

    /// `(T', H_p, W_p)`.
    pub fn grid(&self) -> (usize, usize, usize) {
        (self.frames / self.temporal_patch, self.height / self.patch, self.width / self.patch)
    }

    pub fn len(&self) -> usize {
        let (t, h, w) = self.grid();
        t * h * w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, index: usize) -> (usize, usize, usize) {
        let (_, h, w) = self.grid();
        (index / (h * w), (index / w) % h, index % w)
    }

    pub fn index(&self, t: usize, row: usize, col: usize) -> usize {
        let (_, h, w) = self.grid();
        (t * h + row) * w + col
    }
}

/// `N x d` tokens with their grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Array2<f64>,
    pub layout: TokenLayout,
}

impl TokenSequence {
    pub fn new(tokens: Array2<f64>, layout: TokenLayout) -> Result<Self> {
        if tokens.nrows() != layout.len() {
            return Err(Error::LayoutMismatch(format!("{} tokens for a layout of {}", tokens.nrows(), layout.len())));
        }
        Ok(TokenSequence { tokens, layout })
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.ncols()
    }

    pub(crate) fn with_tokens(&self, tokens: Array2<f64>) -> Self {
        TokenSequence {
            tokens,
            layout: self.layout,
        }
    }
}
