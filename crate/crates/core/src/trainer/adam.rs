use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::net::NetworkParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments per parameter tensor, plus the update count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &NetworkParams<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step<T: Real>(
    params: &mut NetworkParams<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    h: AdamHyper,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for ((p, g), m) in params.tensors_mut().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(h.beta1), T::of(h.beta2));
    let (c1, c2) = (1.0 - h.beta1.powi(t), 1.0 - h.beta2.powi(t));
    let step_size = T::of(lr / c1);
    let inv_c2 = T::of(1.0 / c2);
    let eps = T::of(h.eps);
    let one = T::one();
    for (((p, g), m), v) in params
        .tensors_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let pd = p.data_mut();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = b1 * md[i] + (one - b1) * gi;
            vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
            pd[i] = pd[i] - step_size * md[i] / ((vd[i] * inv_c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> AdamHyper {
        AdamHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = NetworkParams::new(vec![("w".into(), Tensor::full(vec![3], 2.0f64))]).unwrap();
        let before = p.clone();
        let mut s = AdamState::new(&p);
        for _ in 0..10 {
            adam_step(&mut p, &[Tensor::zeros(vec![3])], &mut s, 0.1, hyper()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_sign_scaled() {
        let mut p = NetworkParams::new(vec![("w".into(), Tensor::zeros(vec![2]))]).unwrap();
        let mut s = AdamState::new(&p);
        let g = Tensor::new(vec![2], vec![1e6f64, -1e6]).unwrap();
        adam_step(&mut p, &[g], &mut s, 0.01, hyper()).unwrap();
        let w = p.get("w").unwrap().data();
        assert!((w[0] + 0.01).abs() < 1e-12 && (w[1] - 0.01).abs() < 1e-12);
    }
}
