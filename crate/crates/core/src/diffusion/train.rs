use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{endpoint_conditioning, toy_trajectory_dataset, ConditioningMode};
use super::net::ToyDenoiser;
use super::{ConditioningBundle, NoiseLevel, P_MEAN, P_STD};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};

/// Batch DSM loss and its gradient in `visit_params` order.
fn loss_and_grad(
    net: &ToyDenoiser,
    batch: &Array2<f64>,
    sigmas: &[f64],
    conds: &[ConditioningBundle],
    rng_seed: u64,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if batch.nrows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Array2::from_shape_simple_fn(batch.raw_dim(), || StandardNormal.sample(&mut rng));
    let mut noisy = batch.clone();
    for (b, mut row) in noisy.rows_mut().into_iter().enumerate() {
        row.scaled_add(sigmas[b], &noise.row(b));
    }
    let (raw, trace) = net.forward(net.inputs(&noisy, sigmas, conds)?);
    let pre = net.preconditioner();
    let n = batch.nrows() as f64;
    let mut loss = 0.0;
    let mut grad_raw = Array2::zeros(raw.raw_dim());
    for b in 0..batch.nrows() {
        let s = sigmas[b];
        let (skip, out) = (pre.c_skip(s), pre.c_out(s));
        for j in 0..batch.ncols() {
            let r = skip * noisy[[b, j]] + out * raw[[b, j]] - batch[[b, j]];
            loss += r * r / n;
            grad_raw[[b, j]] = 2.0 * r * out / n;
        }
    }
    if !with_grad {
        return Ok((loss, None));
    }
    let grads = net.backward(&trace, &grad_raw);
    Ok((loss, Some(net.flat_grad(&grads, conds))))
}

/// Mean over the batch of `‖D(x₀ + σε; σ, cond) - x₀‖²`, with `ε` drawn from
/// `rng_seed`.
pub fn dsm_loss(net: &ToyDenoiser, batch: &Array2<f64>, sigmas: &[f64], conds: &[ConditioningBundle], rng_seed: u64) -> Result<f64> {
    if sigmas.iter().any(|s| NoiseLevel::new(*s).is_err()) {
        return Err(Error::InvalidArgument("noise level out of range".into()));
    }
    Ok(loss_and_grad(net, batch, sigmas, conds, rng_seed, false)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub dataset_size: usize,
    pub lr: f64,
    /// Learning rate multiplier reached at the last step (exponential decay).
    pub final_lr_ratio: f64,
    /// Probability of replacing an example's conditioning by the null token.
    pub drop_prob: f64,
    pub mode: ConditioningMode,
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 128,
            dataset_size: 4096,
            lr: 4e-3,
            final_lr_ratio: 0.05,
            drop_prob: 0.1,
            mode: ConditioningMode::Interpolation,
            eval_size: 512,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training-batch loss per step.
    pub curve: Vec<f64>,
    /// Conditional loss on a fixed held-out set before and after training.
    pub initial_eval: f64,
    pub final_eval: f64,
}

fn lognormal_sigmas(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(P_MEAN, P_STD).expect("valid parameters");
    (0..n).map(|_| NoiseLevel::clamped(normal.sample(rng).exp()).get()).collect()
}

/// Trains on `toy_trajectory_dataset` with log-normal noise levels and random
/// conditioning dropout.
pub fn train(net: &mut ToyDenoiser, cfg: &TrainConfig) -> Result<TrainReport> {
    if cfg.batch_size == 0 || cfg.dataset_size == 0 || cfg.eval_size == 0 {
        return Err(Error::InvalidArgument("batch, dataset and eval sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.drop_prob) || !(cfg.lr > 0.0) || !(cfg.final_lr_ratio > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid training config {cfg:?}")));
    }
    if net.config.boundary_dim != 1 || net.config.camera_dim != 0 {
        return Err(Error::InvalidArgument("toy training expects scalar boundaries and no camera code".into()));
    }
    let len = net.config.seq_len;
    let data = toy_trajectory_dataset(cfg.dataset_size, len, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let eval = toy_trajectory_dataset(cfg.eval_size, len, cfg.seed.wrapping_add(2))?;
    let eval_conds: Vec<_> = eval.rows().into_iter().map(|r| endpoint_conditioning(r.as_slice().unwrap(), cfg.mode, vec![])).collect();
    let eval_sigmas = lognormal_sigmas(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3)), cfg.eval_size);
    let eval_seed = cfg.seed.wrapping_add(4);
    let initial_eval = dsm_loss(net, &eval, &eval_sigmas, &eval_conds, eval_seed)?;

    let mut params = net.flat_params();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..Default::default() }, params.len());
    let decay = cfg.final_lr_ratio.powf(1.0 / cfg.steps.max(1) as f64);
    let mut curve = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..cfg.dataset_size)).collect();
        let batch = data.select(Axis(0), &idx);
        let sigmas = lognormal_sigmas(&mut rng, cfg.batch_size);
        let conds: Vec<_> = batch
            .rows()
            .into_iter()
            .map(|r| {
                let c = endpoint_conditioning(r.as_slice().unwrap(), cfg.mode, vec![]);
                if rng.random_bool(cfg.drop_prob) {
                    c.dropped()
                } else {
                    c
                }
            })
            .collect();
        let seed = rng.random();
        let (loss, grad) = loss_and_grad(net, &batch, &sigmas, &conds, seed, true)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: curve.len(),
                loss,
                initial: initial_eval,
            });
        }
        curve.push(loss);
        adam.step(&mut params, &grad.expect("gradient requested"));
        adam.config.lr *= decay;
        net.set_flat_params(&params);
    }
    let final_eval = dsm_loss(net, &eval, &eval_sigmas, &eval_conds, eval_seed)?;
    Ok(TrainReport { curve, initial_eval, final_eval })
}
