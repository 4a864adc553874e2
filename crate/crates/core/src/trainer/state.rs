use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::net::checkpoint::{load_tensors, save_tensors};
use crate::net::{build_discriminator, build_generator, DiscriminatorSpec, GeneratorSpec, NetworkParams};

/// Parameters and optimizer state of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S> {
    pub spec: S,
    pub params: NetworkParams<f32>,
    pub opt: AdamState<f32>,
}

impl<S> Model<S> {
    pub fn new(spec: S, params: NetworkParams<f32>) -> Self {
        let opt = AdamState::new(&params);
        Self { spec, params, opt }
    }
}

/// Everything needed to continue training from where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub generator: Model<GeneratorSpec>,
    pub critic: Option<Model<DiscriminatorSpec>>,
    /// Completed epochs.
    pub epoch: usize,
    pub gen_steps: u64,
    pub critic_steps: u64,
    pub best_ssim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StateMeta {
    epoch: usize,
    gen_steps: u64,
    critic_steps: u64,
    best_ssim: Option<f64>,
    generator_spec: GeneratorSpec,
    critic_spec: Option<DiscriminatorSpec>,
    generator_adam_step: u64,
    critic_adam_step: Option<u64>,
}

const GEN: &str = "generator";
const CRITIC: &str = "critic";

impl TrainState {
    /// Fresh networks; the critic exists only when the adversarial weight is positive.
    pub fn new(
        gen_spec: GeneratorSpec,
        critic_spec: Option<DiscriminatorSpec>,
        config: &TrainConfig,
    ) -> Result<Self> {
        let generator = Model::new(gen_spec.clone(), build_generator(&gen_spec, config.seed)?);
        let critic = match (config.adversarial(), critic_spec) {
            (true, Some(spec)) => {
                let params = build_discriminator(&spec, config.seed.wrapping_add(1))?;
                Some(Model::new(spec, params))
            }
            (true, None) => {
                return Err(Error::config(
                    "discriminator",
                    "adversarial weight is positive but no critic is configured",
                ))
            }
            (false, _) => None,
        };
        Ok(Self {
            generator,
            critic,
            epoch: 0,
            gen_steps: 0,
            critic_steps: 0,
            best_ssim: None,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut tensors: Vec<(String, &Tensor<f32>)> = Vec::new();
        push_model(&mut tensors, GEN, &self.generator.params, &self.generator.opt);
        if let Some(c) = &self.critic {
            push_model(&mut tensors, CRITIC, &c.params, &c.opt);
        }
        let meta = StateMeta {
            epoch: self.epoch,
            gen_steps: self.gen_steps,
            critic_steps: self.critic_steps,
            best_ssim: self.best_ssim,
            generator_spec: self.generator.spec.clone(),
            critic_spec: self.critic.as_ref().map(|c| c.spec.clone()),
            generator_adam_step: self.generator.opt.step,
            critic_adam_step: self.critic.as_ref().map(|c| c.opt.step),
        };
        save_tensors(
            dir,
            tensors.iter().map(|(n, t)| (n.as_str(), *t)),
            serde_json::to_value(meta).expect("state metadata serializes"),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (tensors, meta) = load_tensors::<f32>(dir)?;
        let meta: StateMeta = serde_json::from_value(meta)
            .map_err(|e| Error::format(dir, format!("training state metadata: {e}")))?;
        let mut generator = Model::new(
            meta.generator_spec.clone(),
            build_generator(&meta.generator_spec, 0)?,
        );
        take_model(&tensors, GEN, &mut generator.params, &mut generator.opt)?;
        generator.opt.step = meta.generator_adam_step;
        let critic = match meta.critic_spec {
            Some(spec) => {
                let mut c = Model::new(spec.clone(), build_discriminator(&spec, 0)?);
                take_model(&tensors, CRITIC, &mut c.params, &mut c.opt)?;
                c.opt.step = meta.critic_adam_step.unwrap_or(0);
                Some(c)
            }
            None => None,
        };
        Ok(Self {
            generator,
            critic,
            epoch: meta.epoch,
            gen_steps: meta.gen_steps,
            critic_steps: meta.critic_steps,
            best_ssim: meta.best_ssim,
        })
    }
}

fn push_model<'a>(
    out: &mut Vec<(String, &'a Tensor<f32>)>,
    prefix: &str,
    params: &'a NetworkParams<f32>,
    opt: &'a AdamState<f32>,
) {
    for (name, t) in params.iter() {
        out.push((format!("{prefix}/{name}"), t));
    }
    for ((name, _), m) in params.iter().zip(&opt.m) {
        out.push((format!("{prefix}.adam_m/{name}"), m));
    }
    for ((name, _), v) in params.iter().zip(&opt.v) {
        out.push((format!("{prefix}.adam_v/{name}"), v));
    }
}

fn take_model(
    tensors: &[(String, Tensor<f32>)],
    prefix: &str,
    params: &mut NetworkParams<f32>,
    opt: &mut AdamState<f32>,
) -> Result<()> {
    let find = |key: String, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = tensors
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor `{key}`")))?;
        if t.shape() != shape {
            return Err(Error::CheckpointMismatch(format!(
                "tensor `{key}` has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    };
    let names: Vec<(String, Vec<usize>)> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect();
    for (i, (name, shape)) in names.iter().enumerate() {
        *params.get_mut(name).expect("name from params") = find(format!("{prefix}/{name}"), shape)?;
        opt.m[i] = find(format!("{prefix}.adam_m/{name}"), shape)?;
        opt.v[i] = find(format!("{prefix}.adam_v/{name}"), shape)?;
    }
    Ok(())
}

/// Loads only generator weights from a training checkpoint, checked against `spec`.
pub fn load_generator(dir: &Path, spec: &GeneratorSpec) -> Result<NetworkParams<f32>> {
    let (tensors, _) = load_tensors::<f32>(dir)?;
    let prefix = format!("{GEN}/");
    let entries: Vec<(String, Tensor<f32>)> = tensors
        .into_iter()
        .filter_map(|(n, t)| n.strip_prefix(&prefix).map(|s| (s.to_string(), t)))
        .collect();
    let loaded = NetworkParams::new(entries)?;
    let reference: NetworkParams<f32> = build_generator(spec, 0)?;
    reference.check_compatible(&loaded)?;
    Ok(loaded)
}
