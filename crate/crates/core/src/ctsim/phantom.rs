//! Procedural ellipse phantoms.
//!
//! Coordinates are normalized so the image spans `[-1, 1]` on both axes
//! (x to the right, y up). Pixels are rendered with 4×4 supersampling and the
//! result is clamped to `[0, 1]`.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUPERSAMPLE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    /// Counter-clockwise rotation in radians.
    pub rotation: f64,
    /// Added to every point inside the ellipse.
    pub value: f64,
}

impl Ellipse {
    pub fn disk(radius: f64, value: f64) -> Self {
        Self {
            center: [0.0, 0.0],
            axes: [radius, radius],
            rotation: 0.0,
            value,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let u = (dx * c + dy * s) / self.axes[0];
        let v = (-dx * s + dy * c) / self.axes[1];
        u * u + v * v <= 1.0
    }
}

/// Ellipsoid used for correlated slice stacks; slicing at depth `z` gives an
/// ellipse whose axes shrink toward the poles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub axes: [f64; 3],
    pub rotation: f64,
    pub value: f64,
}

impl Ellipsoid {
    fn slice(&self, z: f64) -> Option<Ellipse> {
        let t = (z - self.center[2]) / self.axes[2];
        if t.abs() >= 1.0 {
            return None;
        }
        let s = (1.0 - t * t).sqrt();
        Some(Ellipse {
            center: [self.center[0], self.center[1]],
            axes: [self.axes[0] * s, self.axes[1] * s],
            rotation: self.rotation,
            value: self.value,
        })
    }
}

/// Seeded random features placed inside the fixed ellipses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatures {
    pub count: [usize; 2],
    /// Range of in-plane semi-axes.
    pub semi_axis: [f64; 2],
    /// Range of depth semi-axis (normalized units) for volumetric phantoms.
    pub depth_semi_axis: [f64; 2],
    pub value: [f64; 2],
    /// Features are centered within this radius.
    pub placement_radius: f64,
}

impl Default for RandomFeatures {
    fn default() -> Self {
        Self {
            count: [4, 9],
            semi_axis: [0.04, 0.25],
            depth_semi_axis: [0.05, 0.3],
            value: [-0.15, 0.35],
            placement_radius: 0.55,
        }
    }
}

/// Smooth low-frequency texture added where the phantom is non-zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub amplitude: f64,
    pub modes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub ellipses: Vec<Ellipse>,
    #[serde(default)]
    pub background: Option<Background>,
    #[serde(default)]
    pub random: Option<RandomFeatures>,
    /// Relative amplitude of the depth drift applied to fixed ellipses in volumes.
    #[serde(default)]
    pub depth_drift: f64,
}

impl PhantomSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Modified Shepp–Logan head phantom.
    pub fn shepp_logan() -> Self {
        #[rustfmt::skip]
        const TABLE: [[f64; 6]; 10] = [
            // value, a, b, x0, y0, degrees
            [ 1.0, 0.69,   0.92,  0.0,   0.0,     0.0],
            [-0.8, 0.6624, 0.874, 0.0,  -0.0184,  0.0],
            [-0.2, 0.11,   0.31,  0.22,  0.0,   -18.0],
            [-0.2, 0.16,   0.41, -0.22,  0.0,    18.0],
            [ 0.1, 0.21,   0.25,  0.0,   0.35,    0.0],
            [ 0.1, 0.046,  0.046, 0.0,   0.1,     0.0],
            [ 0.1, 0.046,  0.046, 0.0,  -0.1,     0.0],
            [ 0.1, 0.046,  0.023,-0.08, -0.605,   0.0],
            [ 0.1, 0.023,  0.023, 0.0,  -0.606,   0.0],
            [ 0.1, 0.023,  0.046, 0.06, -0.605,   0.0],
        ];
        Self {
            ellipses: TABLE
                .iter()
                .map(|r| Ellipse {
                    center: [r[3], r[4]],
                    axes: [r[1], r[2]],
                    rotation: r[5].to_radians(),
                    value: r[0],
                })
                .collect(),
            ..Self::default()
        }
    }

    /// Abdomen-like body outline with seeded organ-like features.
    pub fn abdomen() -> Self {
        Self {
            ellipses: vec![
                Ellipse {
                    center: [0.0, 0.0],
                    axes: [0.86, 0.64],
                    rotation: 0.0,
                    value: 0.45,
                },
                Ellipse {
                    center: [0.0, -0.42],
                    axes: [0.09, 0.08],
                    rotation: 0.0,
                    value: 0.4,
                },
            ],
            background: Some(Background {
                amplitude: 0.03,
                modes: 3,
            }),
            random: Some(RandomFeatures::default()),
            depth_drift: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (index, e) in self.ellipses.iter().enumerate() {
            if !(e.axes[0] > 0.0 && e.axes[1] > 0.0) {
                return Err(Error::DegenerateEllipse {
                    index,
                    a: e.axes[0],
                    b: e.axes[1],
                });
            }
        }
        if let Some(r) = &self.random {
            if r.count[0] > r.count[1]
                || !(r.semi_axis[0] > 0.0 && r.semi_axis[0] <= r.semi_axis[1])
                || !(r.depth_semi_axis[0] > 0.0 && r.depth_semi_axis[0] <= r.depth_semi_axis[1])
                || r.value[0] > r.value[1]
            {
                return Err(Error::config("phantom.random", "ranges must be ordered and positive"));
            }
        }
        Ok(())
    }
}

/// Renders a single 2-D phantom.
pub fn make_phantom(spec: &PhantomSpec, n: usize, seed: u64) -> Result<Array2<f64>> {
    Ok(make_phantom_volume(spec, n, 1, 1.0, seed)?.remove(0))
}

/// Renders `n_slices` correlated slices; `slice_step` is the slice spacing in
/// normalized units. Random features become ellipsoids spanning several
/// slices and fixed ellipses drift smoothly with depth.
pub fn make_phantom_volume(
    spec: &PhantomSpec,
    n: usize,
    n_slices: usize,
    slice_step: f64,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    if n < 16 {
        return Err(Error::config("phantom.n", format!("need at least 16 pixels, got {n}")));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = spec
        .random
        .as_ref()
        .map(|r| random_ellipsoids(r, n_slices as f64 * slice_step, &mut rng))
        .unwrap_or_default();
    let drift_phase: Vec<f64> = spec.ellipses.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let texture = spec.background.as_ref().map(|b| Texture::sample(b, &mut rng));

    let mut slices = Vec::with_capacity(n_slices);
    for k in 0..n_slices {
        let z = (k as f64 - (n_slices as f64 - 1.0) / 2.0) * slice_step;
        let mut shapes: Vec<Ellipse> = spec
            .ellipses
            .iter()
            .zip(&drift_phase)
            .map(|(e, &ph)| {
                let s = 1.0 + spec.depth_drift * (z * 2.0 * PI + ph).sin();
                Ellipse {
                    axes: [e.axes[0] * s, e.axes[1] * s],
                    ..e.clone()
                }
            })
            .collect();
        let n_fixed = shapes.len();
        shapes.extend(features.iter().filter_map(|f| f.slice(z)));
        slices.push(render(&shapes, n_fixed, n, texture.as_ref(), z));
    }
    Ok(slices)
}

fn random_ellipsoids(r: &RandomFeatures, depth: f64, rng: &mut ChaCha8Rng) -> Vec<Ellipsoid> {
    let count = rng.random_range(r.count[0]..=r.count[1]);
    (0..count)
        .map(|_| {
            let radius = r.placement_radius * rng.random::<f64>().sqrt();
            let phi = rng.random::<f64>() * 2.0 * PI;
            let a = rng.random_range(r.semi_axis[0]..=r.semi_axis[1]);
            let b = rng.random_range(r.semi_axis[0]..=r.semi_axis[1]);
            let c = rng.random_range(r.depth_semi_axis[0]..=r.depth_semi_axis[1]);
            Ellipsoid {
                center: [
                    radius * phi.cos(),
                    radius * phi.sin(),
                    (rng.random::<f64>() - 0.5) * depth,
                ],
                axes: [a, b, c],
                rotation: rng.random::<f64>() * PI,
                value: rng.random_range(r.value[0]..=r.value[1]),
            }
        })
        .collect()
}

struct Texture {
    amplitude: f64,
    waves: Vec<[f64; 4]>,
}

impl Texture {
    fn sample(b: &Background, rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..b.modes)
            .map(|_| {
                [
                    rng.random_range(1.0..4.0),
                    rng.random_range(1.0..4.0),
                    rng.random_range(0.5..2.0),
                    rng.random::<f64>() * 2.0 * PI,
                ]
            })
            .collect();
        Self {
            amplitude: b.amplitude,
            waves,
        }
    }

    fn at(&self, x: f64, y: f64, z: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| (PI * (w[0] * x + w[1] * y + w[2] * z) + w[3]).cos())
            .sum();
        self.amplitude * s / self.waves.len().max(1) as f64
    }
}

fn render(
    shapes: &[Ellipse],
    n_fixed: usize,
    n: usize,
    texture: Option<&Texture>,
    z: f64,
) -> Array2<f64> {
    let half = n as f64 / 2.0;
    let ss = SUPERSAMPLE as f64;
    Array2::from_shape_fn((n, n), |(i, j)| {
        let mut acc = 0.0;
        for si in 0..SUPERSAMPLE {
            for sj in 0..SUPERSAMPLE {
                let x = (j as f64 + (sj as f64 + 0.5) / ss - half) / half;
                let y = (half - i as f64 - (si as f64 + 0.5) / ss) / half;
                let mut v = 0.0;
                let mut inside = false;
                for (k, e) in shapes.iter().enumerate() {
                    if e.contains(x, y) {
                        v += e.value;
                        inside |= k < n_fixed;
                    }
                }
                if let (Some(t), true) = (texture, inside) {
                    v += t.at(x, y, z);
                }
                acc += v.clamp(0.0, 1.0);
            }
        }
        acc / (ss * ss)
    })
}
