use std::path::PathBuf;

use camsplat::diffusion::{endpoint_conditioning, sample, toy_trajectory_dataset, train, ConditioningMode, ToyDenoiser};
use camsplat::io::{read_checkpoint, write_checkpoint};
use clap::{Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::files::{open_reader, write_atomic, write_bytes, write_json};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    SingleView,
    Interpolation,
}

impl From<ModeArg> for ConditioningMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SingleView => ConditioningMode::SingleView,
            ModeArg::Interpolation => ConditioningMode::Interpolation,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ToyCommand {
    /// Train a denoiser on synthetic 1-D trajectories.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample trajectories that match the endpoints of held-out sequences.
    Sample {
        /// Checkpoint written by `train`; the architecture comes from `[diffusion.model]`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        guidance: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    steps: usize,
    initial_eval: f64,
    final_eval: f64,
    reduction: f64,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn run_train(out: PathBuf, cfg: &RunConfig) -> CliResult<()> {
    let d = &cfg.diffusion;
    let mut net = ToyDenoiser::new(d.model)?;
    let report = train(&mut net, &d.train)?;
    write_atomic(&out.join("model.ckpt"), |w| write_checkpoint(w, &net.named_tensors()).map_err(CliError::from))?;
    write_bytes(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    write_atomic(&out.join("curve.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["step", "loss"]).map_err(csv_err)?;
        for (i, l) in report.curve.iter().enumerate() {
            csv.write_record([i.to_string(), l.to_string()]).map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_json(
        &out.join("report.json"),
        &TrainSummary {
            steps: report.curve.len(),
            initial_eval: report.initial_eval,
            final_eval: report.final_eval,
            reduction: report.initial_eval / report.final_eval,
        },
    )
}

fn run_sample(checkpoint: PathBuf, out: PathBuf, cfg: &RunConfig) -> CliResult<()> {
    let d = &cfg.diffusion;
    let mut net = ToyDenoiser::new(d.model)?;
    let tensors = read_checkpoint(&mut open_reader(&checkpoint)?)?;
    net.load_named_tensors(&tensors)
        .map_err(|e| CliError::input(format!("{}: {e}", checkpoint.display())))?;
    let s = &d.sample;
    let held_out = toy_trajectory_dataset(s.count, d.model.seq_len, s.seed)?;
    let mut rows = Vec::with_capacity(s.count);
    for (i, seq) in held_out.outer_iter().enumerate() {
        let seq = seq.to_vec();
        let cond = endpoint_conditioning(&seq, s.mode, Vec::new());
        let x = sample(&net, &cond, s.steps, s.guidance, s.seed.wrapping_add(1 + i as u64))?;
        rows.push((seq[0], seq[seq.len() - 1], x));
    }
    write_atomic(&out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string(), "target_start".into(), "target_end".into()];
        header.extend((0..d.model.seq_len).map(|t| format!("x{t}")));
        csv.write_record(&header).map_err(csv_err)?;
        for (i, (a, b, x)) in rows.iter().enumerate() {
            let mut rec = vec![i.to_string(), a.to_string(), b.to_string()];
            rec.extend(x.iter().map(f64::to_string));
            csv.write_record(&rec).map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    })
}

pub fn run(cmd: ToyCommand, cfg: &mut RunConfig) -> CliResult<()> {
    match cmd {
        ToyCommand::Train { out, steps, seed } => {
            if let Some(n) = steps {
                cfg.diffusion.train.steps = n;
            }
            if let Some(s) = seed {
                cfg.diffusion.train.seed = s;
            }
            cfg.validate()?;
            run_train(out, cfg)
        }
        ToyCommand::Sample { checkpoint, out, count, steps, guidance, seed, mode } => {
            let s = &mut cfg.diffusion.sample;
            if let Some(v) = count {
                s.count = v;
            }
            if let Some(v) = steps {
                s.steps = v;
            }
            if let Some(v) = guidance {
                s.guidance = v;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(m) = mode {
                s.mode = m.into();
            }
            cfg.validate()?;
            run_sample(checkpoint, out, cfg)
        }
    }
}
