use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper};
use super::config::TrainConfig;
use super::state::{Model, TrainState};
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::net::{discriminator_forward, generator_forward, DiscriminatorSpec, GeneratorSpec, NetworkParams};
use crate::objectives::{
    adversarial_loss, critic_loss, generator_total_loss, gradient_penalty, mse_loss, ssim_loss,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticMetrics {
    pub loss: f64,
    /// `mean(D(real)) − mean(D(fake))`.
    pub wasserstein: f64,
    pub gp: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMetrics {
    pub total: f64,
    pub l2: f64,
    pub l_sl: f64,
    pub l_al: f64,
}

fn hyper(c: &TrainConfig) -> AdamHyper {
    AdamHyper {
        beta1: c.adam_beta1,
        beta2: c.adam_beta2,
        eps: c.adam_eps,
    }
}

fn check_pair(few: &Tensor<f32>, full: &Tensor<f32>) -> Result<()> {
    if few.shape() == full.shape() {
        Ok(())
    } else {
        Err(Error::shape(
            "train_step",
            format!("few-view {:?} vs full-view {:?}", few.shape(), full.shape()),
        ))
    }
}

/// Generator output without recording gradients.
pub fn generate(
    params: &NetworkParams<f32>,
    spec: &GeneratorSpec,
    input: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let mut g = Graph::inference();
    let p = params.bind(&mut g, false);
    let x = g.leaf(input.clone(), false);
    let y = generator_forward(&mut g, &p, spec, x)?;
    Ok(g.value(y).clone())
}

/// One Adam update of the critic on `critic_loss`; the generator is only read.
pub fn train_step_critic(
    state: &mut TrainState,
    few: &Tensor<f32>,
    full: &Tensor<f32>,
    config: &TrainConfig,
    lr: f64,
    seed: u64,
) -> Result<CriticMetrics> {
    check_pair(few, full)?;
    let fake = generate(&state.generator.params, &state.generator.spec, few)?;
    let critic = state
        .critic
        .as_mut()
        .ok_or_else(|| Error::config("discriminator", "critic step without a critic"))?;
    let m = critic_update(critic, full, &fake, config, lr, seed)?;
    state.critic_steps += 1;
    Ok(m)
}

fn critic_update(
    critic: &mut Model<DiscriminatorSpec>,
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
    config: &TrainConfig,
    lr: f64,
    seed: u64,
) -> Result<CriticMetrics> {
    let mut g = Graph::new();
    let p = critic.params.bind(&mut g, true);
    let spec = &critic.spec;
    let xr = g.leaf(real.clone(), false);
    let xf = g.leaf(fake.clone(), false);
    let d_real = discriminator_forward(&mut g, &p, spec, xr)?;
    let d_fake = discriminator_forward(&mut g, &p, spec, xf)?;
    let gp = gradient_penalty(
        &mut g,
        |g, x| discriminator_forward(g, &p, spec, x),
        real,
        fake,
        seed,
    )?;
    let loss = critic_loss(&mut g, d_fake, d_real, gp, &config.weights)?;
    let mean = |t: &Tensor<f32>| t.data().iter().map(|&v| f64::from(v)).sum::<f64>() / t.numel() as f64;
    let metrics = CriticMetrics {
        loss: f64::from(g.value(loss).item()),
        wasserstein: mean(g.value(d_real)) - mean(g.value(d_fake)),
        gp: f64::from(g.value(gp).item()),
    };
    let mut grads = g.backward(loss)?;
    let grads = p.collect_grads(&critic.params, &mut grads);
    adam_step(&mut critic.params, &grads, &mut critic.opt, lr, hyper(config))?;
    Ok(metrics)
}

/// Gradients of the composite generator loss with respect to every generator
/// parameter, with the critic frozen.
pub fn generator_gradients(
    state: &TrainState,
    few: &Tensor<f32>,
    full: &Tensor<f32>,
    config: &TrainConfig,
) -> Result<(GeneratorMetrics, Vec<Tensor<f32>>)> {
    check_pair(few, full)?;
    let gen = &state.generator;
    let mut g = Graph::new();
    let p = gen.params.bind(&mut g, true);
    let x = g.leaf(few.clone(), false);
    let target = g.leaf(full.clone(), false);
    let y = generator_forward(&mut g, &p, &gen.spec, x)?;
    let l2 = mse_loss(&mut g, y, target)?;
    let l_sl = ssim_loss(&mut g, y, target, &config.ssim)?;
    let l_al = match (&state.critic, config.adversarial()) {
        (Some(c), true) => {
            let cp = c.params.bind(&mut g, false);
            let d = discriminator_forward(&mut g, &cp, &c.spec, y)?;
            adversarial_loss(&mut g, d)?
        }
        _ => g.constant(Tensor::scalar(0.0)),
    };
    let total = generator_total_loss(&mut g, l2, l_sl, l_al, &config.weights)?;
    let item = |g: &Graph<f32>, v| f64::from(g.value(v).item());
    let metrics = GeneratorMetrics {
        total: item(&g, total),
        l2: item(&g, l2),
        l_sl: item(&g, l_sl),
        l_al: item(&g, l_al),
    };
    let mut grads = g.backward(total)?;
    Ok((metrics, p.collect_grads(&gen.params, &mut grads)))
}

/// One Adam update of the generator on the composite loss; the critic is only read.
pub fn train_step_generator(
    state: &mut TrainState,
    few: &Tensor<f32>,
    full: &Tensor<f32>,
    config: &TrainConfig,
    lr: f64,
) -> Result<GeneratorMetrics> {
    let (metrics, grads) = generator_gradients(state, few, full, config)?;
    let gen = &mut state.generator;
    adam_step(&mut gen.params, &grads, &mut gen.opt, lr, hyper(config))?;
    state.gen_steps += 1;
    Ok(metrics)
}
