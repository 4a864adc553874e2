use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_al: f64,
    pub lambda_sl: f64,
    pub lambda_gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_al: 0.0025,
            lambda_sl: 0.5,
            lambda_gp: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("weights.lambda_al", self.lambda_al),
            ("weights.lambda_sl", self.lambda_sl),
            ("weights.lambda_gp", self.lambda_gp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// `λ_al·L_al + λ_sl·L_sl + L_2` on plain numbers.
    pub fn generator_total(&self, l2: f64, l_sl: f64, l_al: f64) -> f64 {
        self.lambda_al * l_al + self.lambda_sl * l_sl + l2
    }
}

fn same_shape<T: Real>(g: &Graph<T>, x: Var, y: Var, op: &'static str) -> Result<()> {
    if g.shape(x) == g.shape(y) {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", g.shape(x), g.shape(y))))
    }
}

/// Mean squared difference over every element.
pub fn mse_loss<T: Real>(g: &mut Graph<T>, x: Var, y: Var) -> Result<Var> {
    same_shape(g, x, y, "mse_loss")?;
    let d = g.sub(x, y)?;
    let sq = g.square(d)?;
    g.mean(sq)
}

/// Negative mean critic score on generated samples.
pub fn adversarial_loss<T: Real>(g: &mut Graph<T>, d_fake: Var) -> Result<Var> {
    let m = g.mean(d_fake)?;
    g.scale(m, -1.0)
}

/// `mean(d_fake) − mean(d_real) + λ_gp · gp`.
pub fn critic_loss<T: Real>(
    g: &mut Graph<T>,
    d_fake: Var,
    d_real: Var,
    gp: Var,
    w: &LossWeights,
) -> Result<Var> {
    let f = g.mean(d_fake)?;
    let r = g.mean(d_real)?;
    let wd = g.sub(f, r)?;
    let pen = g.scale(gp, w.lambda_gp)?;
    g.add(wd, pen)
}

/// `λ_al · adv + λ_sl · ssim_l + mse`.
pub fn generator_total_loss<T: Real>(
    g: &mut Graph<T>,
    mse: Var,
    ssim_l: Var,
    adv: Var,
    w: &LossWeights,
) -> Result<Var> {
    let a = g.scale(adv, w.lambda_al)?;
    let s = g.scale(ssim_l, w.lambda_sl)?;
    let t = g.add(a, s)?;
    g.add(t, mse)
}

/// One interpolation weight per sample, uniform on `[0, 1)`.
pub fn sample_alpha(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Gradient penalty at seeded random interpolates of `real` and `fake`.
pub fn gradient_penalty<T, F>(
    g: &mut Graph<T>,
    critic: F,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    seed: u64,
) -> Result<Var>
where
    T: Real,
    F: FnOnce(&mut Graph<T>, Var) -> Result<Var>,
{
    let n = real.shape().first().copied().unwrap_or(0);
    gradient_penalty_with_alpha(g, critic, real, fake, &sample_alpha(n, seed))
}

/// Interpolate `α·real + (1−α)·fake` per sample.
pub fn interpolate<T: Real>(real: &Tensor<T>, fake: &Tensor<T>, alpha: &[f64]) -> Result<Tensor<T>> {
    if real.shape() != fake.shape() {
        return Err(Error::shape(
            "gradient_penalty",
            format!("real {:?} vs fake {:?}", real.shape(), fake.shape()),
        ));
    }
    let n = real.shape().first().copied().unwrap_or(0);
    if alpha.len() != n || n == 0 {
        return Err(Error::shape(
            "gradient_penalty",
            format!("{} interpolation weights for batch of {n}", alpha.len()),
        ));
    }
    let per = real.numel() / n;
    Ok(Tensor::from_fn(real.shape().to_vec(), |i| {
        let a = T::of(alpha[i / per]);
        a * real.data()[i] + (T::one() - a) * fake.data()[i]
    }))
}

/// `mean_n (‖∇_Ī D(Ī)‖₂ − 1)²` with explicit interpolation weights. The
/// result stays differentiable with respect to the critic's parameters.
pub fn gradient_penalty_with_alpha<T, F>(
    g: &mut Graph<T>,
    critic: F,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    alpha: &[f64],
) -> Result<Var>
where
    T: Real,
    F: FnOnce(&mut Graph<T>, Var) -> Result<Var>,
{
    let mixed = interpolate(real, fake, alpha)?;
    let x = g.leaf(mixed, true);
    let grad = g.input_gradient(x, critic)?;
    let norm = g.l2_norm(grad, true)?;
    let dev = g.add_scalar(norm, -1.0)?;
    let sq = g.square(dev)?;
    g.mean(sq)
}
