use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{precondition, ConditioningBundle, Denoiser, NoiseLevel, Preconditioner};
use crate::error::{Error, Result};
use crate::io::NamedTensor;
use crate::seq::Linear;
use crate::seq::{collect_tensors, load_tensors, visit_linear};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDenoiserConfig {
    pub seq_len: usize,
    pub camera_dim: usize,
    /// Length of each boundary vector.
    pub boundary_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub sigma_data: f64,
    pub seed: u64,
}

impl Default for ToyDenoiserConfig {
    fn default() -> Self {
        ToyDenoiserConfig {
            seq_len: 16,
            camera_dim: 0,
            boundary_dim: 1,
            hidden: 256,
            hidden_layers: 3,
            sigma_data: super::SIGMA_DATA,
            seed: 0,
        }
    }
}

impl ToyDenoiserConfig {
    /// Width of the conditioning feature vector: camera code, then each
    /// boundary followed by a presence flag.
    pub fn cond_dim(&self) -> usize {
        self.camera_dim + 2 * (self.boundary_dim + 1)
    }

    pub fn input_dim(&self) -> usize {
        self.seq_len + 1 + self.cond_dim()
    }
}

/// MLP with SiLU activations computing the raw residual `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub config: ToyDenoiserConfig,
    pub layers: Vec<Linear>,
    pub null_token: Array1<f64>,
}

pub(crate) struct Trace {
    input: Array2<f64>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
}

pub(crate) struct Grads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub input: Array2<f64>,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

impl ToyDenoiser {
    pub fn new(config: ToyDenoiserConfig) -> Result<Self> {
        if config.seq_len == 0 || config.hidden == 0 || config.boundary_dim == 0 || !(config.sigma_data > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid denoiser config {config:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.hidden_layers + 1);
        let mut width = config.input_dim();
        for _ in 0..config.hidden_layers {
            layers.push(Linear::random(width, config.hidden, true, &mut rng));
            width = config.hidden;
        }
        layers.push(Linear::random(width, config.seq_len, true, &mut rng));
        Ok(ToyDenoiser {
            null_token: Array1::zeros(config.cond_dim()),
            layers,
            config,
        })
    }

    pub fn preconditioner(&self) -> Preconditioner {
        Preconditioner { sigma_data: self.config.sigma_data }
    }

    pub(crate) fn cond_features(&self, cond: &ConditioningBundle) -> Array1<f64> {
        if cond.drop_flag {
            return self.null_token.clone();
        }
        let c = &self.config;
        let mut f = Array1::zeros(c.cond_dim());
        f.slice_mut(s![..c.camera_dim]).assign(&Array1::from(cond.camera_code.clone()));
        let mut at = c.camera_dim;
        for b in [&cond.boundary_start, &cond.boundary_end] {
            if let Some(v) = b {
                f.slice_mut(s![at..at + c.boundary_dim]).assign(&Array1::from(v.clone()));
                f[at + c.boundary_dim] = 1.0;
            }
            at += c.boundary_dim + 1;
        }
        f
    }

    /// Network input rows `[c_in·x, c_noise, cond]`.
    pub(crate) fn inputs(&self, x: &Array2<f64>, sigmas: &[f64], conds: &[ConditioningBundle]) -> Result<Array2<f64>> {
        let c = &self.config;
        if x.ncols() != c.seq_len || x.nrows() != sigmas.len() || x.nrows() != conds.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} inputs, {} sigmas, {} conditions for sequences of length {}",
                x.nrows(),
                x.ncols(),
                sigmas.len(),
                conds.len(),
                c.seq_len
            )));
        }
        let pre = self.preconditioner();
        let mut input = Array2::zeros((x.nrows(), c.input_dim()));
        for (b, mut row) in input.rows_mut().into_iter().enumerate() {
            conds[b].validate(c.camera_dim, c.boundary_dim)?;
            let s = sigmas[b];
            row.slice_mut(s![..c.seq_len]).assign(&(&x.row(b) * pre.c_in(s)));
            row[c.seq_len] = pre.c_noise(s);
            row.slice_mut(s![c.seq_len + 1..]).assign(&self.cond_features(&conds[b]));
        }
        Ok(input)
    }

    pub(crate) fn forward(&self, input: Array2<f64>) -> (Array2<f64>, Trace) {
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = input.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let z = layer.forward(&h);
            h = z.mapv(silu);
            pre.push(z);
        }
        let out = self.layers.last().expect("output layer").forward(&h);
        (out, Trace { input, pre })
    }

    pub(crate) fn backward(&self, trace: &Trace, grad_out: &Array2<f64>) -> Grads {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = grad_out.clone();
        for i in (0..n).rev() {
            let a = if i == 0 { trace.input.clone() } else { trace.pre[i - 1].mapv(silu) };
            grads.push((g.t().dot(&a), g.sum_axis(Axis(0))));
            let mut ga = g.dot(&self.layers[i].weight);
            if i > 0 {
                ga.zip_mut_with(&trace.pre[i - 1], |v, z| *v *= silu_grad(*z));
            }
            g = ga;
        }
        grads.reverse();
        Grads { layers: grads, input: g }
    }

    /// Denoised batch `D` for rows of `x`.
    pub fn denoise_batch(&self, x: &Array2<f64>, sigmas: &[f64], conds: &[ConditioningBundle]) -> Result<Array2<f64>> {
        let (raw, _) = self.forward(self.inputs(x, sigmas, conds)?);
        let pre = self.preconditioner();
        let mut d = raw;
        for (b, mut row) in d.rows_mut().into_iter().enumerate() {
            let s = sigmas[b];
            let (skip, out) = (pre.c_skip(s), pre.c_out(s));
            row.zip_mut_with(&x.row(b), |f, x| *f = skip * x + out * *f);
        }
        Ok(d)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            visit_linear(&format!("layers.{i}"), l, f);
        }
        let n = self.null_token.len();
        f("null_token", &[n], self.null_token.as_slice_mut().expect("standard layout"));
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        collect_tensors(&mut |f| self.clone().visit_params(f))
    }

    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        load_tensors(tensors, &mut |f| self.visit_params(f))
    }

    pub(crate) fn flat_params(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, _, v| out.extend_from_slice(v));
        out
    }

    pub(crate) fn set_flat_params(&mut self, params: &[f64]) {
        let mut at = 0;
        self.visit_params(&mut |_, _, v| {
            v.copy_from_slice(&params[at..at + v.len()]);
            at += v.len();
        });
    }

    /// Flattened gradient in `visit_params` order.
    pub(crate) fn flat_grad(&self, grads: &Grads, conds: &[ConditioningBundle]) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &grads.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        let start = self.config.seq_len + 1;
        let mut null = Array1::<f64>::zeros(self.null_token.len());
        for (row, c) in grads.input.rows().into_iter().zip(conds) {
            if c.drop_flag {
                null += &row.slice(s![start..]);
            }
        }
        out.extend(null.iter());
        out
    }
}

impl Denoiser for ToyDenoiser {
    fn data_len(&self) -> usize {
        self.config.seq_len
    }

    fn denoise(&self, x: &[f64], sigma: NoiseLevel, cond: &ConditioningBundle) -> Vec<f64> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
        let input = self.inputs(&xb, &[sigma.get()], std::slice::from_ref(cond)).expect("input matches the denoiser configuration");
        let (raw, _) = self.forward(input);
        precondition(&self.preconditioner(), x, sigma, raw.as_slice().expect("standard layout"))
    }
}
