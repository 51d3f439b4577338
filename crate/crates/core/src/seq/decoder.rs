//! Transposed-convolution decoder from tokens to a Gaussian feature map.

use ndarray::{Array1, Array4, Array5, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::f32_round;
use super::stack::{collect_tensors, load_tensors};
use super::{TokenLayout, TokenSequence};
use crate::camera::Trajectory;
use crate::error::{Error, Result};
use crate::gsplat::{
    composite_loss_grad, decode_gaussians, render, render_backward, sigmoid, DecodeOptions, GaussianCloud, GaussianFeatureMap,
    GaussianGrads, LossWeights, SupervisionView,
};
use crate::io::NamedTensor;
use crate::optim::{Adam, AdamConfig};

/// 3D transposed convolution over `T x H x W x C` volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose3d {
    /// `in x out x kt x kh x kw`.
    pub weight: Array5<f64>,
    pub bias: Array1<f64>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvTranspose3d {
    pub fn zeros(inputs: usize, outputs: usize, kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3]) -> Self {
        ConvTranspose3d {
            weight: Array5::zeros((inputs, outputs, kernel[0], kernel[1], kernel[2])),
            bias: Array1::zeros(outputs),
            stride,
            padding,
        }
    }

    pub fn random(inputs: usize, outputs: usize, kernel: [usize; 3], stride: [usize; 3], padding: [usize; 3], rng: &mut impl Rng) -> Self {
        let mut c = Self::zeros(inputs, outputs, kernel, stride, padding);
        let bound = 1.0 / ((inputs * kernel.iter().product::<usize>()) as f64).sqrt();
        c.weight.mapv_inplace(|_| f32_round(rng.random_range(-bound..bound)));
        c
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }

    /// `(in - 1) * stride - 2 * padding + kernel` per axis.
    pub fn output_dims(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let k = self.kernel();
        let dim = |i: usize, a: usize| -> Result<usize> {
            let full = (i.max(1) - 1) * self.stride[a] + k[a];
            full.checked_sub(2 * self.padding[a])
                .filter(|v| *v > 0)
                .ok_or_else(|| Error::ShapeMismatch("transposed convolution output is empty".into()))
        };
        Ok((dim(input.0, 0)?, dim(input.1, 1)?, dim(input.2, 2)?))
    }

    /// Calls `f(input index, output index, kernel index)` for every tap that
    /// lands inside the output.
    fn for_each_tap(&self, input: (usize, usize, usize), output: (usize, usize, usize), mut f: impl FnMut([usize; 3], [usize; 3], [usize; 3])) {
        let k = self.kernel();
        let (ins, outs) = ([input.0, input.1, input.2], [output.0, output.1, output.2]);
        let place = |i: usize, kk: usize, a: usize| -> Option<usize> {
            let o = (i * self.stride[a] + kk).checked_sub(self.padding[a])?;
            (o < outs[a]).then_some(o)
        };
        for it in 0..ins[0] {
            for ih in 0..ins[1] {
                for iw in 0..ins[2] {
                    for kt in 0..k[0] {
                        let Some(ot) = place(it, kt, 0) else { continue };
                        for kh in 0..k[1] {
                            let Some(oh) = place(ih, kh, 1) else { continue };
                            for kw in 0..k[2] {
                                let Some(ow) = place(iw, kw, 2) else { continue };
                                f([it, ih, iw], [ot, oh, ow], [kt, kh, kw]);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Array4<f64>) -> Result<Array4<f64>> {
        let (t, h, w, c) = x.dim();
        let (ci, co) = (self.weight.shape()[0], self.weight.shape()[1]);
        if c != ci {
            return Err(Error::ShapeMismatch(format!("{c} input channels, layer expects {ci}")));
        }
        let (ot, oh, ow) = self.output_dims((t, h, w))?;
        let mut y = Array4::zeros((ot, oh, ow, co));
        for mut px in y.lanes_mut(Axis(3)) {
            px.assign(&self.bias);
        }
        self.for_each_tap((t, h, w), (ot, oh, ow), |i, o, k| {
            for a in 0..ci {
                let xv = x[[i[0], i[1], i[2], a]];
                if xv == 0.0 {
                    continue;
                }
                for b in 0..co {
                    y[[o[0], o[1], o[2], b]] += xv * self.weight[[a, b, k[0], k[1], k[2]]];
                }
            }
        });
        Ok(y)
    }

    /// Gradients with respect to input, weight and bias.
    pub fn backward(&self, x: &Array4<f64>, grad_out: &Array4<f64>) -> (Array4<f64>, Array5<f64>, Array1<f64>) {
        let (t, h, w, _) = x.dim();
        let (ot, oh, ow, _) = grad_out.dim();
        let (ci, co) = (self.weight.shape()[0], self.weight.shape()[1]);
        let mut gx = Array4::zeros(x.raw_dim());
        let mut gw = Array5::zeros(self.weight.raw_dim());
        let gb = grad_out.sum_axis(Axis(0)).sum_axis(Axis(0)).sum_axis(Axis(0));
        self.for_each_tap((t, h, w), (ot, oh, ow), |i, o, k| {
            for a in 0..ci {
                let xv = x[[i[0], i[1], i[2], a]];
                let mut acc = 0.0;
                for b in 0..co {
                    let g = grad_out[[o[0], o[1], o[2], b]];
                    acc += g * self.weight[[a, b, k[0], k[1], k[2]]];
                    gw[[a, b, k[0], k[1], k[2]]] += xv * g;
                }
                gx[[i[0], i[1], i[2], a]] += acc;
            }
        });
        (gx, gw, gb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub hidden: usize,
    pub patch: usize,
    pub temporal_patch: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            hidden: 32,
            patch: 2,
            temporal_patch: 1,
            seed: 0,
        }
    }
}

/// Upsampling deconvolution (kernel = stride = patch), SiLU, then a 3x3x3
/// transposed convolution to the 12 Gaussian channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub upsample: ConvTranspose3d,
    pub head: ConvTranspose3d,
}

fn silu(v: f64) -> f64 {
    v * sigmoid(v)
}

fn silu_grad(v: f64) -> f64 {
    let s = sigmoid(v);
    s * (1.0 + v * (1.0 - s))
}

struct Trace {
    volume: Array4<f64>,
    pre: Array4<f64>,
    act: Array4<f64>,
}

impl Decoder {
    pub fn new(width: usize, config: DecoderConfig) -> Result<Self> {
        if width == 0 || config.hidden == 0 || config.patch == 0 || config.temporal_patch == 0 {
            return Err(Error::InvalidArgument("decoder sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (p, tp) = (config.patch, config.temporal_patch);
        Ok(Decoder {
            config,
            upsample: ConvTranspose3d::random(width, config.hidden, [tp, p, p], [tp, p, p], [0; 3], &mut rng),
            head: ConvTranspose3d::random(config.hidden, GaussianFeatureMap::CHANNELS, [3; 3], [1; 3], [1; 3], &mut rng),
        })
    }

    pub fn width(&self) -> usize {
        self.upsample.weight.shape()[0]
    }

    fn volume(&self, y: &TokenSequence) -> Result<Array4<f64>> {
        let l = y.layout;
        if l.patch != self.config.patch || l.temporal_patch != self.config.temporal_patch || y.width() != self.width() {
            return Err(Error::LayoutMismatch(format!(
                "tokens (patch {}, temporal {}, width {}) vs decoder (patch {}, temporal {}, width {})",
                l.patch,
                l.temporal_patch,
                y.width(),
                self.config.patch,
                self.config.temporal_patch,
                self.width()
            )));
        }
        let (t, h, w) = l.grid();
        Ok(y.tokens.clone().into_shape_with_order((t, h, w, y.width())).expect("token count matches grid"))
    }

    fn trace(&self, y: &TokenSequence) -> Result<Trace> {
        let volume = self.volume(y)?;
        let pre = self.upsample.forward(&volume)?;
        let act = pre.mapv(silu);
        Ok(Trace { volume, pre, act })
    }

    fn to_map(layout: &TokenLayout, out: Array4<f64>) -> Result<GaussianFeatureMap> {
        let (t, h, w, _) = out.dim();
        if (t, h, w) != (layout.frames, layout.height, layout.width) {
            return Err(Error::LayoutMismatch(format!(
                "decoded {t}x{h}x{w}, layout is {}x{}x{}",
                layout.frames, layout.height, layout.width
            )));
        }
        GaussianFeatureMap::from_data(t, h, w, out.into_raw_vec_and_offset().0)
    }

    /// Full-resolution `T x H x W x 12` feature map.
    pub fn decode(&self, y: &TokenSequence) -> Result<GaussianFeatureMap> {
        let tr = self.trace(y)?;
        Self::to_map(&y.layout, self.head.forward(&tr.act)?)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (name, conv) in [("decoder.upsample", &mut self.upsample), ("decoder.head", &mut self.head)] {
            let shape = conv.weight.shape().to_vec();
            f(&format!("{name}.weight"), &shape, conv.weight.as_slice_mut().unwrap());
            let n = conv.bias.len();
            f(&format!("{name}.bias"), &[n], conv.bias.as_slice_mut().unwrap());
        }
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        collect_tensors(&mut |f| self.clone().visit_params(f))
    }

    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        load_tensors(tensors, &mut |f| self.visit_params(f))
    }

    fn flat_params(&mut self) -> Vec<f64> {
        let mut v = Vec::new();
        self.visit_params(&mut |_, _, p| v.extend_from_slice(p));
        v
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_params(&mut |_, _, p| {
            p.copy_from_slice(&flat[at..at + p.len()]);
            at += p.len();
        });
    }

    /// Parameter gradient (flat, in visit order) for an upstream feature-map
    /// gradient.
    fn param_grad(&self, y: &TokenSequence, grad_map: &GaussianFeatureMap) -> Result<Vec<f64>> {
        let tr = self.trace(y)?;
        let go = Array4::from_shape_vec((grad_map.frames, grad_map.height, grad_map.width, GaussianFeatureMap::CHANNELS), grad_map.data.clone())
            .expect("feature map shape");
        let (g_act, g_head_w, g_head_b) = self.head.backward(&tr.act, &go);
        let g_pre = g_act * &tr.pre.mapv(silu_grad);
        let (_, g_up_w, g_up_b) = self.upsample.backward(&tr.volume, &g_pre);
        let mut flat = Vec::new();
        for a in [g_up_w.as_slice().unwrap(), g_up_b.as_slice().unwrap(), g_head_w.as_slice().unwrap(), g_head_b.as_slice().unwrap()] {
            flat.extend_from_slice(a);
        }
        Ok(flat)
    }
}

/// Chains primitive gradients back to the pre-activation feature map.
/// Channels without a rendering gradient (scale, rotation) get zero.
pub fn decode_backward(map: &GaussianFeatureMap, cloud: &GaussianCloud, grads: &GaussianGrads) -> Result<GaussianFeatureMap> {
    let anchors = cloud.anchors.as_ref().ok_or_else(|| Error::InvalidArgument("cloud has no anchor rays".into()))?;
    if cloud.len() != map.rows() || grads.color.len() != cloud.len() {
        return Err(Error::ShapeMismatch("gradient and feature map sizes differ".into()));
    }
    let mut out = GaussianFeatureMap::zeros(map.frames, map.height, map.width);
    let c = GaussianFeatureMap::CHANNELS;
    for i in 0..cloud.len() {
        let f = &map.data[i * c..(i + 1) * c];
        let g = &mut out.data[i * c..(i + 1) * c];
        let gs = &cloud.gaussians[i];
        for ch in 0..3 {
            g[ch] = grads.color[i][ch] * gs.color[ch] * (1.0 - gs.color[ch]);
        }
        g[10] = grads.opacity[i] * gs.opacity * (1.0 - gs.opacity);
        g[11] = grads.mean[i].dot(&anchors[i].direction) * sigmoid(f[11]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderTrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub background: [f64; 3],
}

impl Default for DecoderTrainConfig {
    fn default() -> Self {
        DecoderTrainConfig {
            iterations: 100,
            lr: 1e-2,
            weights: LossWeights::default(),
            background: [0.0; 3],
        }
    }
}

/// Toy training of the decoder alone: tokens are fixed, the decoded cloud is
/// rendered into every view and the reconstruction loss is minimized with
/// Adam. Limited to `T <= 4` and `32 x 32` frames. Returns the loss before
/// each step.
pub fn train_decoder(
    decoder: &mut Decoder,
    tokens: &TokenSequence,
    trajectory: &Trajectory,
    views: &[SupervisionView],
    cfg: &DecoderTrainConfig,
) -> Result<Vec<f64>> {
    let l = tokens.layout;
    if l.frames > 4 || l.height > 32 || l.width > 32 {
        return Err(Error::InvalidArgument(format!("decoder training is limited to 4x32x32, got {}x{}x{}", l.frames, l.height, l.width)));
    }
    if views.is_empty() {
        return Err(Error::InvalidArgument("no supervision views".into()));
    }
    cfg.weights.validate()?;
    let mut params = decoder.flat_params();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, params.len());
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let map = decoder.decode(tokens)?;
        let (cloud, _) = decode_gaussians(&map, trajectory, &DecodeOptions::default())?;
        let mut total = GaussianGrads::zeros(cloud.len());
        let mut loss = 0.0;
        for v in views {
            let out = render(&cloud, &v.camera, cfg.background)?;
            let (b, lg) = composite_loss_grad(&out.image, &out.depth, &v.image, v.depth.as_ref(), &cfg.weights, None)?;
            loss += b.total / views.len() as f64;
            let g = render_backward(&cloud, &v.camera, &out, &lg.image, v.depth.as_ref().map(|_| lg.depth.as_slice()))?;
            let s = 1.0 / views.len() as f64;
            for i in 0..cloud.len() {
                for ch in 0..3 {
                    total.color[i][ch] += s * g.color[i][ch];
                }
                total.opacity[i] += s * g.opacity[i];
                total.mean[i] += g.mean[i] * s;
            }
        }
        losses.push(loss);
        let grad_map = decode_backward(&map, &cloud, &total)?;
        let grad = decoder.param_grad(tokens, &grad_map)?;
        adam.step(&mut params, &grad);
        decoder.set_flat_params(&params);
    }
    Ok(losses)
}
