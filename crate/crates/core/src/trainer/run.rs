use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{lr_at_epoch, TrainConfig};
use super::state::TrainState;
use super::steps::{generate, train_step_critic, train_step_generator, CriticMetrics};
use crate::autodiff::Tensor;
use crate::data::PatchDataset;
use crate::error::{Error, Result};
use crate::net::{GeneratorSpec, NetworkParams, Rank};
use crate::objectives::{evaluate_metrics, Metrics, SsimParams};

pub const LOG_HEADER: &str = "step,epoch,lr,l2,l_sl,l_al,critic,gp";

/// One row of the training log, written after every generator update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub l2: f64,
    pub l_sl: f64,
    pub l_al: f64,
    pub critic: f64,
    pub gp: f64,
}

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step, self.epoch, self.lr, self.l2, self.l_sl, self.l_al, self.critic, self.gp
        )
    }
}

/// Mean validation metrics of the generator output and of its input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub epoch: usize,
    pub output: Metrics,
    pub input: Metrics,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub log: Vec<LogRow>,
    pub validation: Vec<Validation>,
    pub critic_updates: u64,
    pub generator_updates: u64,
}

/// Output locations; without one, nothing is written to disk.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn log_path(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }

    pub fn validation_path(&self) -> PathBuf {
        self.root.join("validation.csv")
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("epoch_{epoch:03}"))
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints").join("best")
    }

    pub fn latest_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints").join("latest")
    }
}

fn append(path: &Path, header: &str, line: &str) -> Result<()> {
    let new = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let text = if new { format!("{header}\n{line}\n") } else { format!("{line}\n") };
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn planar(spec: &GeneratorSpec) -> bool {
    spec.rank == Rank::Two
}

/// Mean metrics over every validation patch.
pub fn validate(
    params: &NetworkParams<f32>,
    spec: &GeneratorSpec,
    data: &PatchDataset,
    batch_size: usize,
    ssim: &SsimParams,
    epoch: usize,
) -> Result<Validation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ids: Vec<usize> = (0..data.len()).collect();
    let (mut out_acc, mut in_acc) = ([0.0; 3], [0.0; 3]);
    for chunk in ids.chunks(batch_size.max(1)) {
        let (few, full) = data.batch::<f32>(chunk, planar(spec))?;
        let pred = generate(params, spec, &few)?;
        let per = few.numel() / chunk.len();
        for k in 0..chunk.len() {
            let sample = |t: &Tensor<f32>| -> Result<Tensor<f64>> {
                let shape = t.shape()[1..].to_vec();
                Tensor::new(shape, t.data()[k * per..(k + 1) * per].iter().map(|&v| f64::from(v)).collect())
            };
            let reference = sample(&full)?;
            let o = evaluate_metrics(&sample(&pred)?, &reference, ssim)?;
            let i = evaluate_metrics(&sample(&few)?, &reference, ssim)?;
            for (acc, m) in [(&mut out_acc, o), (&mut in_acc, i)] {
                acc[0] += m.psnr;
                acc[1] += m.ssim;
                acc[2] += m.rmse;
            }
        }
    }
    let n = data.len() as f64;
    let to = |a: [f64; 3]| Metrics {
        psnr: a[0] / n,
        ssim: a[1] / n,
        rmse: a[2] / n,
    };
    Ok(Validation {
        epoch,
        output: to(out_acc),
        input: to(in_acc),
    })
}

/// Mixes the run seed with a step counter for per-step randomness.
fn step_seed(seed: u64, step: u64) -> u64 {
    seed ^ step.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Trains from `state.epoch` up to `config.epochs`.
///
/// Every batch receives `critic_steps_per_gen` critic updates followed by one
/// generator update. After each epoch the state is checkpointed and, when a
/// validation set is given, evaluated; the best mean SSIM is kept separately.
pub fn train_loop(
    state: &mut TrainState,
    train: &PatchDataset,
    val: Option<&PatchDataset>,
    config: &TrainConfig,
    out: Option<&RunDir>,
) -> Result<TrainReport> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(o) = out {
        fs::create_dir_all(&o.root).map_err(|e| Error::io(&o.root, e))?;
        if state.epoch == 0 {
            for p in [o.log_path(), o.validation_path()] {
                match fs::remove_file(&p) {
                    Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(Error::io(p, e)),
                    _ => {}
                }
            }
        }
    }
    let mut report = TrainReport::default();
    let plane = planar(&state.generator.spec);
    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let lr = lr_at_epoch(config, epoch);
        let order = train.epoch_order(config.seed, epoch);
        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        if let Some(cap) = config.max_batches_per_epoch {
            batches.truncate(cap);
        }
        for ids in batches {
            let (few, full) = train.batch::<f32>(ids, plane)?;
            let mut last = CriticMetrics::default();
            if state.critic.is_some() {
                for _ in 0..config.critic_steps_per_gen {
                    let seed = step_seed(config.seed, state.critic_steps);
                    last = train_step_critic(state, &few, &full, config, lr, seed)?;
                    report.critic_updates += 1;
                }
            }
            let m = train_step_generator(state, &few, &full, config, lr)?;
            report.generator_updates += 1;
            let row = LogRow {
                step: state.gen_steps,
                epoch,
                lr,
                l2: m.l2,
                l_sl: m.l_sl,
                l_al: m.l_al,
                critic: last.loss,
                gp: last.gp,
            };
            if let Some(o) = out {
                append(&o.log_path(), LOG_HEADER, &row.csv())?;
            }
            report.log.push(row);
        }
        state.epoch += 1;
        let mut improved = false;
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let gen = &state.generator;
            let res = validate(&gen.params, &gen.spec, v, config.batch_size, &config.ssim, epoch)?;
            if state.best_ssim.is_none_or(|b| res.output.ssim > b) {
                state.best_ssim = Some(res.output.ssim);
                improved = true;
            }
            if let Some(o) = out {
                let line = format!(
                    "{},{},{},{},{},{},{}",
                    epoch,
                    res.output.psnr,
                    res.output.ssim,
                    res.output.rmse,
                    res.input.psnr,
                    res.input.ssim,
                    res.input.rmse
                );
                append(
                    &o.validation_path(),
                    "epoch,psnr,ssim,rmse,input_psnr,input_ssim,input_rmse",
                    &line,
                )?;
            }
            report.validation.push(res);
        }
        if let Some(o) = out {
            state.save(&o.epoch_checkpoint(epoch))?;
            state.save(&o.latest_checkpoint())?;
            if improved || val.is_none() {
                state.save(&o.best_checkpoint())?;
            }
        }
    }
    Ok(report)
}
