use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attention_block, AttentionParams, TokenMask};
use super::layers::Linear;
use super::ssm::{ssm_block, SsmParams};
use super::TokenSequence;
use crate::error::{Error, Result};
use crate::io::NamedTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Ssm,
    /// `epipolar` restricts attention with the token mask when one is given.
    Attention { epipolar: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridStackConfig {
    pub blocks: Vec<BlockKind>,
    pub width: usize,
    pub state: usize,
    pub heads: usize,
    pub seed: u64,
}

impl Default for HybridStackConfig {
    fn default() -> Self {
        let attn = BlockKind::Attention { epipolar: true };
        HybridStackConfig {
            blocks: vec![BlockKind::Ssm, attn, BlockKind::Ssm, attn],
            width: 64,
            state: 16,
            heads: 4,
            seed: 0,
        }
    }
}

impl HybridStackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.state == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "width {} must be positive and divisible by {} heads, state {} positive",
                self.width, self.heads, self.state
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Ssm(SsmParams),
    Attention { params: AttentionParams, epipolar: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridStack {
    pub config: HybridStackConfig,
    pub layers: Vec<Layer>,
}

pub(crate) fn visit_linear(prefix: &str, l: &mut Linear, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
    let shape = l.weight.shape().to_vec();
    f(&format!("{prefix}.weight"), &shape, l.weight.as_slice_mut().expect("standard layout"));
    if let Some(b) = &mut l.bias {
        f(&format!("{prefix}.bias"), &[b.len()], b.as_slice_mut().expect("standard layout"));
    }
}

impl HybridStack {
    /// Seeded random initialization.
    pub fn new(config: HybridStackConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers = config
            .blocks
            .iter()
            .map(|b| {
                Ok(match b {
                    BlockKind::Ssm => Layer::Ssm(SsmParams::random(config.width, config.state, &mut rng)),
                    BlockKind::Attention { epipolar } => Layer::Attention {
                        params: AttentionParams::random(config.width, config.heads, &mut rng)?,
                        epipolar: *epipolar,
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(HybridStack { config, layers })
    }

    /// Calls `f(name, shape, values)` for every parameter tensor in a fixed
    /// order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Ssm(p) => {
                    let pre = format!("layers.{i}.ssm");
                    let w = p.norm.gamma.len();
                    f(&format!("{pre}.norm.gamma"), &[w], p.norm.gamma.as_slice_mut().unwrap());
                    f(&format!("{pre}.norm.beta"), &[w], p.norm.beta.as_slice_mut().unwrap());
                    let shape = p.a_log.shape().to_vec();
                    f(&format!("{pre}.a_log"), &shape, p.a_log.as_slice_mut().unwrap());
                    visit_linear(&format!("{pre}.proj_b"), &mut p.proj_b, f);
                    visit_linear(&format!("{pre}.proj_c"), &mut p.proj_c, f);
                    visit_linear(&format!("{pre}.proj_delta"), &mut p.proj_delta, f);
                    visit_linear(&format!("{pre}.out"), &mut p.out, f);
                }
                Layer::Attention { params: p, .. } => {
                    let pre = format!("layers.{i}.attn");
                    let w = p.norm.gamma.len();
                    f(&format!("{pre}.norm.gamma"), &[w], p.norm.gamma.as_slice_mut().unwrap());
                    f(&format!("{pre}.norm.beta"), &[w], p.norm.beta.as_slice_mut().unwrap());
                    visit_linear(&format!("{pre}.wq"), &mut p.wq, f);
                    visit_linear(&format!("{pre}.wk"), &mut p.wk, f);
                    visit_linear(&format!("{pre}.wv"), &mut p.wv, f);
                    visit_linear(&format!("{pre}.wo"), &mut p.wo, f);
                }
            }
        }
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        collect_tensors(&mut |f| self.clone().visit_params(f))
    }

    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        load_tensors(tensors, &mut |f| self.visit_params(f))
    }
}

type Visitor<'a> = dyn FnMut(&mut dyn FnMut(&str, &[usize], &mut [f64])) + 'a;

pub(crate) fn collect_tensors(visit: &mut Visitor<'_>) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    visit(&mut |name, shape, values| {
        out.push(NamedTensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: values.to_vec(),
        })
    });
    out
}

pub(crate) fn load_tensors(tensors: &[NamedTensor], visit: &mut Visitor<'_>) -> Result<()> {
    let by_name: std::collections::HashMap<&str, &NamedTensor> = tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut err = None;
    let mut used = 0;
    visit(&mut |name, shape, values| {
        if err.is_some() {
            return;
        }
        match by_name.get(name) {
            Some(t) if t.shape == shape => {
                values.copy_from_slice(&t.data);
                used += 1;
            }
            Some(t) => err = Some(Error::ShapeMismatch(format!("tensor {name}: {:?} vs {:?}", t.shape, shape))),
            None => err = Some(Error::Format(format!("missing tensor {name}"))),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if used != tensors.len() {
        return Err(Error::Format(format!("{} unexpected tensors", tensors.len() - used)));
    }
    Ok(())
}

/// Applies the blocks in order. Attention blocks flagged `epipolar` use
/// `mask` when given and run dense otherwise.
pub fn run_stack(x: &TokenSequence, stack: &HybridStack, mask: Option<&TokenMask>) -> Result<TokenSequence> {
    if x.width() != stack.config.width {
        return Err(Error::ShapeMismatch(format!("tokens of width {} for a stack of width {}", x.width(), stack.config.width)));
    }
    let mut y = x.clone();
    for layer in &stack.layers {
        y = match layer {
            Layer::Ssm(p) => ssm_block(&y, p),
            Layer::Attention { params, epipolar } => attention_block(&y, params, mask.filter(|_| *epipolar))?,
        };
    }
    Ok(y)
}
