use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvGeom, Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WindowKind {
    Gaussian { sigma: f64 },
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimParams {
    pub window: usize,
    pub window_kind: WindowKind,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the data.
    pub range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            window_kind: WindowKind::Gaussian { sigma: 1.5 },
            k1: 0.01,
            k2: 0.03,
            range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.range).powi(2)
    }

    /// Normalized `window × window` weights, row-major.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.window;
        let raw: Vec<f64> = match self.window_kind {
            WindowKind::Uniform => vec![1.0; n * n],
            WindowKind::Gaussian { sigma } => {
                let c = (n as f64 - 1.0) / 2.0;
                let g: Vec<f64> = (0..n)
                    .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .collect();
                (0..n * n).map(|k| g[k / n] * g[k % n]).collect()
            }
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("ssim.window", "must be positive"));
        }
        if let WindowKind::Gaussian { sigma } = self.window_kind {
            if !(sigma > 0.0) {
                return Err(Error::config("ssim.window_kind.sigma", "must be positive"));
            }
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.range > 0.0) {
            return Err(Error::config("ssim", "k1, k2 and range must be positive"));
        }
        Ok(())
    }
}

/// `[N, 1, (D,) H, W]` as a stack of single-channel slices `[N·D, 1, H, W]`.
fn as_slices<T: Real>(g: &mut Graph<T>, x: Var, p: &SsimParams) -> Result<(Var, usize)> {
    let s = g.shape(x).to_vec();
    if s.len() < 4 || s[1] != 1 {
        return Err(Error::shape(
            "ssim",
            format!("expected [N, 1, (D,) H, W], got {s:?}"),
        ));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h < p.window || w < p.window {
        return Err(Error::shape(
            "ssim",
            format!("image {h}x{w} is smaller than the {0}x{0} window", p.window),
        ));
    }
    let slices = s[..s.len() - 2].iter().product::<usize>();
    Ok((g.reshape(x, vec![slices, 1, h, w])?, s[0]))
}

/// Local SSIM index for every valid window position, per slice: `[N·D, 1, H', W']`.
pub fn ssim_map<T: Real>(g: &mut Graph<T>, x: Var, y: Var, p: &SsimParams) -> Result<Var> {
    p.validate()?;
    if g.shape(x) != g.shape(y) {
        return Err(Error::shape(
            "ssim",
            format!("{:?} vs {:?}", g.shape(x), g.shape(y)),
        ));
    }
    let (xs, _) = as_slices(g, x, p)?;
    let (ys, _) = as_slices(g, y, p)?;
    let n = p.window;
    let win = Tensor::new(
        vec![1, 1, n, n],
        p.weights().into_iter().map(T::of).collect(),
    )?;
    let w = g.constant(win);
    let geom = ConvGeom::unit();
    let mx = g.conv(xs, w, None, geom)?;
    let my = g.conv(ys, w, None, geom)?;
    let xx = g.square(xs)?;
    let yy = g.square(ys)?;
    let xy = g.mul(xs, ys)?;
    let exx = g.conv(xx, w, None, geom)?;
    let eyy = g.conv(yy, w, None, geom)?;
    let exy = g.conv(xy, w, None, geom)?;
    let mx2 = g.square(mx)?;
    let my2 = g.square(my)?;
    let mxy = g.mul(mx, my)?;
    let vx = g.sub(exx, mx2)?;
    let vy = g.sub(eyy, my2)?;
    let cxy = g.sub(exy, mxy)?;

    let a = g.scale(mxy, 2.0)?;
    let a = g.add_scalar(a, p.c1())?;
    let b = g.scale(cxy, 2.0)?;
    let b = g.add_scalar(b, p.c2())?;
    let c = g.add(mx2, my2)?;
    let c = g.add_scalar(c, p.c1())?;
    let d = g.add(vx, vy)?;
    let d = g.add_scalar(d, p.c2())?;
    let num = g.mul(a, b)?;
    let den = g.mul(c, d)?;
    g.div(num, den)
}

/// Mean SSIM per batch sample, shape `[N]`.
pub fn ssim_per_sample<T: Real>(g: &mut Graph<T>, x: Var, y: Var, p: &SsimParams) -> Result<Var> {
    let n = g.shape(x).first().copied().unwrap_or(0);
    let map = ssim_map(g, x, y, p)?;
    let per = g.value(map).numel() / n.max(1);
    let flat = g.reshape(map, vec![n, per])?;
    g.mean_per_sample(flat)
}

/// Mean of the SSIM map.
pub fn ssim<T: Real>(g: &mut Graph<T>, x: Var, y: Var, p: &SsimParams) -> Result<Var> {
    let map = ssim_map(g, x, y, p)?;
    g.mean(map)
}

/// `1 − mean` of the per-sample SSIM.
pub fn ssim_loss<T: Real>(g: &mut Graph<T>, x: Var, y: Var, p: &SsimParams) -> Result<Var> {
    let per = ssim_per_sample(g, x, y, p)?;
    let m = g.mean(per)?;
    let neg = g.scale(m, -1.0)?;
    g.add_scalar(neg, 1.0)
}

/// SSIM of two tensors shaped `[.., H, W]`, evaluated without gradient tracking.
pub fn ssim_value(x: &Tensor<f64>, y: &Tensor<f64>, p: &SsimParams) -> Result<f64> {
    let (xv, yv) = (image_stack(x)?, image_stack(y)?);
    let mut g = Graph::inference();
    let xv = g.leaf(xv, false);
    let yv = g.leaf(yv, false);
    let s = ssim(&mut g, xv, yv, p)?;
    Ok(g.value(s).item())
}

/// Any `[.., H, W]` tensor as `[S, 1, H, W]`.
pub(crate) fn image_stack(x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::shape("ssim", format!("need at least 2 axes, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    x.clone().reshaped(vec![x.numel() / (h * w).max(1), 1, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_sums_to_one() {
        for kind in [WindowKind::Uniform, WindowKind::Gaussian { sigma: 1.5 }] {
            let p = SsimParams {
                window_kind: kind,
                ..SsimParams::default()
            };
            let s: f64 = p.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_is_exactly_one() {
        let x = Tensor::from_fn(vec![2, 1, 3, 16, 14], |i| ((i * 7919) % 101) as f64 / 100.0);
        assert_eq!(ssim_value(&x, &x, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn constant_closed_form() {
        let p = SsimParams::default();
        let a = Tensor::zeros(vec![12, 12]);
        let b = Tensor::ones(vec![12, 12]);
        let want = p.c1() / (1.0 + p.c1());
        assert!((ssim_value(&a, &b, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn too_small_rejected() {
        let a = Tensor::zeros(vec![10, 12]);
        assert!(ssim_value(&a, &a, &SsimParams::default()).is_err());
    }
}
