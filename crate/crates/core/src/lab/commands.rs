use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::LabConfig;
use super::figures::{side_by_side, write_png};
use crate::autodiff::Tensor;
use crate::data::{
    assemble_pairs, hu_window, load_dataset, save_dataset, simulate_pair, split_by_role,
    DatasetManifest, PairedVolume, Role, Volume,
};
use crate::error::{Error, Result};
use crate::net::{GeneratorSpec, NetworkParams, Rank};
use crate::objectives::{
    evaluate_metrics, write_metrics_csv, MetricRow, MetricSummary, SsimParams,
};
use crate::trainer::{generate, load_generator, train_loop, RunDir, TrainReport, TrainState};

/// Seed of phantom `i` in a run seeded with `seed`.
pub fn phantom_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// Simulates phantoms, full-view and few-view reconstructions, and writes the
/// normalized paired dataset with its manifest.
pub fn cmd_simulate(cfg: &LabConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let spec = cfg.simulation_spec();
    let raw = (0..cfg.simulation.n_phantoms)
        .into_par_iter()
        .map(|i| simulate_pair(&spec, phantom_seed(cfg.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let (pairs, bounds) = assemble_pairs(&raw, &spec, cfg.simulation.n_validation)?;
    save_dataset(&cfg.dataset_dir(), &pairs, bounds, &spec)
}

/// Trains on the simulated dataset, resuming from the latest checkpoint when asked.
pub fn cmd_train(cfg: &LabConfig, resume: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let (_, pairs) = load_dataset(&cfg.dataset_dir())?;
    let (train, val) = split_by_role(pairs, cfg.patch)?;
    let tcfg = cfg.train_config();
    let run = RunDir { root: cfg.run_dir() };
    let mut state = if resume {
        let s = TrainState::load(&run.latest_checkpoint())?;
        if s.generator.spec != cfg.generator {
            return Err(Error::CheckpointMismatch(
                "checkpoint generator differs from the configured one".into(),
            ));
        }
        s
    } else {
        TrainState::new(cfg.generator.clone(), Some(cfg.discriminator_spec()), &tcfg)?
    };
    let val = (!val.is_empty()).then_some(&val);
    train_loop(&mut state, &train, val, &tcfg, Some(&run))
}

/// Runs the generator over whole slices of a normalized volume.
pub fn reconstruct_volume(
    params: &NetworkParams<f32>,
    spec: &GeneratorSpec,
    input: &Volume,
) -> Result<Volume> {
    let (s, h, w) = input.data.dim();
    let shape = match spec.rank {
        Rank::Two => vec![s, 1, h, w],
        Rank::Three => vec![1, 1, s, h, w],
    };
    let x = Tensor::new(shape, input.data.iter().map(|&v| v as f32).collect())?;
    let y = generate(params, spec, &x)?;
    let data = Array3::from_shape_vec((s, h, w), y.data().iter().map(|&v| f64::from(v)).collect())
        .expect("generator preserves shape");
    Ok(Volume {
        data,
        ..input.clone()
    })
}

fn default_checkpoint(cfg: &LabConfig) -> PathBuf {
    RunDir { root: cfg.run_dir() }.best_checkpoint()
}

/// Reconstructs one volume file, or every validation pair when `input` is absent.
/// Returns the stems written.
pub fn cmd_reconstruct(
    cfg: &LabConfig,
    checkpoint: Option<&Path>,
    input: Option<&Path>,
    output: Option<&Path>,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ckpt = checkpoint.map_or_else(|| default_checkpoint(cfg), Path::to_path_buf);
    let params = load_generator(&ckpt, &cfg.generator)?;
    if let Some(stem) = input {
        let out = output.ok_or_else(|| Error::config("output", "required together with input"))?;
        let vol = Volume::load(stem)?;
        reconstruct_volume(&params, &cfg.generator, &vol)?.save(out)?;
        return Ok(vec![out.to_path_buf()]);
    }
    let (_, pairs) = load_dataset(&cfg.dataset_dir())?;
    let dir = output.map_or_else(|| cfg.reconstruction_dir(), Path::to_path_buf);
    let mut written = Vec::new();
    for p in pairs.iter().filter(|p| p.role == Role::Validation) {
        let stem = dir.join(&p.id);
        reconstruct_volume(&params, &cfg.generator, &p.few_view)?.save(&stem)?;
        written.push(stem);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub network: Vec<MetricRow>,
    pub fbp: Vec<MetricRow>,
    pub network_summary: MetricSummary,
    pub fbp_summary: MetricSummary,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut t = self.fbp_summary.table("FBP");
        let net = self.network_summary.table("network");
        t.push_str(net.lines().nth(1).unwrap_or_default());
        t.push('\n');
        t
    }
}

fn volume_tensor(v: &Volume) -> Tensor<f64> {
    let (s, h, w) = v.data.dim();
    Tensor::new(vec![s, h, w], v.data.iter().copied().collect()).expect("dims match data")
}

/// Scores reconstructions of the validation pairs against their full-view
/// references, alongside the few-view FBP inputs. Writes `metrics.csv`,
/// `metrics_fbp.csv`, `summary.txt` and one comparison PNG per pair
/// (few-view | network | reference, middle slice).
pub fn cmd_eval(cfg: &LabConfig, outputs: Option<&Path>) -> Result<EvalReport> {
    cfg.validate()?;
    let (_, pairs) = load_dataset(&cfg.dataset_dir())?;
    let dir = outputs.map_or_else(|| cfg.reconstruction_dir(), Path::to_path_buf);
    let ssim = SsimParams::default();
    let window = cfg.window()?;
    let eval_dir = cfg.eval_dir();
    fs::create_dir_all(&eval_dir).map_err(|e| Error::io(&eval_dir, e))?;
    let val: Vec<&PairedVolume> = pairs.iter().filter(|p| p.role == Role::Validation).collect();
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut network, mut fbp) = (Vec::new(), Vec::new());
    for p in val {
        let out = Volume::load(&dir.join(&p.id))?;
        let reference = volume_tensor(&p.full_view);
        network.push(MetricRow {
            sample_id: p.id.clone(),
            metrics: evaluate_metrics(&volume_tensor(&out), &reference, &ssim)?,
        });
        fbp.push(MetricRow {
            sample_id: p.id.clone(),
            metrics: evaluate_metrics(&volume_tensor(&p.few_view), &reference, &ssim)?,
        });
        let mid = out.data.len_of(Axis(0)) / 2;
        let panels = [&p.few_view, &out, &p.full_view]
            .iter()
            .map(|v| hu_window(v, mid, window))
            .collect::<Result<Vec<_>>>()?;
        write_png(
            &eval_dir.join("figures").join(format!("{}.png", p.id)),
            &side_by_side(&panels, 2),
        )?;
    }
    write_metrics_csv(&eval_dir.join("metrics.csv"), &network)?;
    write_metrics_csv(&eval_dir.join("metrics_fbp.csv"), &fbp)?;
    let report = EvalReport {
        network_summary: MetricSummary::of(&network),
        fbp_summary: MetricSummary::of(&fbp),
        network,
        fbp,
    };
    let summary = eval_dir.join("summary.txt");
    fs::write(&summary, report.table()).map_err(|e| Error::io(&summary, e))?;
    Ok(report)
}
