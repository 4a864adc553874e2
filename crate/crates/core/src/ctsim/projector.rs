use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FanBeamGeometry;
use crate::error::{Error, Result};

/// Projection data: one row per view, one column per detector channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub geometry: FanBeamGeometry,
    /// Source angle of every row, in radians.
    pub angles: Vec<f64>,
    pub data: Array2<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: &FanBeamGeometry) -> Self {
        Self {
            geometry: geometry.clone(),
            angles: geometry.view_angles(),
            data: Array2::zeros((geometry.n_views, geometry.n_detectors)),
        }
    }

    pub fn n_views(&self) -> usize {
        self.data.nrows()
    }
}

/// Source position and unit ray direction for view angle `beta` and detector
/// angle `gamma`. The source sits at `D·(cos β, sin β)` and the central ray
/// points through the isocenter.
pub(crate) fn ray(d: f64, beta: f64, gamma: f64) -> ([f64; 2], [f64; 2]) {
    let src = [d * beta.cos(), d * beta.sin()];
    let dir = [-(beta + gamma).cos(), -(beta + gamma).sin()];
    (src, dir)
}

/// Bilinear sample of `img` at physical position `(x, y)` (mm, y up).
/// Pixel centers sit at half-integer offsets; values outside are zero.
#[inline]
pub(crate) fn bilinear(img: &Array2<f64>, pixel_mm: f64, x: f64, y: f64) -> f64 {
    let n = img.nrows();
    let half = n as f64 / 2.0;
    let fj = x / pixel_mm + half - 0.5;
    let fi = half - 0.5 - y / pixel_mm;
    let (j0, i0) = (fj.floor(), fi.floor());
    let (tj, ti) = (fj - j0, fi - i0);
    let (j0, i0) = (j0 as isize, i0 as isize);
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
            0.0
        } else {
            img[[i as usize, j as usize]]
        }
    };
    (1.0 - ti) * ((1.0 - tj) * at(i0, j0) + tj * at(i0, j0 + 1))
        + ti * ((1.0 - tj) * at(i0 + 1, j0) + tj * at(i0 + 1, j0 + 1))
}

/// Parameter interval where the ray crosses the square support of the
/// interpolated image.
pub(crate) fn clip_to_box(src: [f64; 2], dir: [f64; 2], half: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..2 {
        if dir[a].abs() < 1e-15 {
            if src[a].abs() > half {
                return None;
            }
            continue;
        }
        let ta = (-half - src[a]) / dir[a];
        let tb = (half - src[a]) / dir[a];
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t1 > t0).then_some((t0, t1))
}

/// Line integral along one ray by midpoint sampling with at most `max_step` mm.
pub(crate) fn ray_integral(
    img: &Array2<f64>,
    pixel_mm: f64,
    src: [f64; 2],
    dir: [f64; 2],
    max_step: f64,
) -> f64 {
    let half = (img.nrows() as f64 / 2.0 + 0.5) * pixel_mm;
    let Some((t0, t1)) = clip_to_box(src, dir, half) else {
        return 0.0;
    };
    let steps = ((t1 - t0) / max_step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut acc = 0.0;
    for k in 0..steps {
        let t = t0 + (k as f64 + 0.5) * h;
        acc += bilinear(img, pixel_mm, src[0] + t * dir[0], src[1] + t * dir[1]);
    }
    acc * h
}

/// Fan-beam forward projection with ray-marching step `pixel_mm / 2`.
pub fn forward_project(image: &Array2<f64>, geometry: &FanBeamGeometry) -> Result<Sinogram> {
    forward_project_with_step(image, geometry, geometry.pixel_mm / 2.0)
}

pub fn forward_project_with_step(
    image: &Array2<f64>,
    geometry: &FanBeamGeometry,
    max_step_mm: f64,
) -> Result<Sinogram> {
    geometry.validate()?;
    if image.dim() != (geometry.image_n, geometry.image_n) {
        return Err(Error::shape(
            "forward_project",
            format!(
                "image {:?} does not match grid {}",
                image.dim(),
                geometry.image_n
            ),
        ));
    }
    let angles = geometry.view_angles();
    let gammas: Vec<f64> = (0..geometry.n_detectors)
        .map(|j| geometry.detector_angle(j))
        .collect();
    let rows: Vec<Vec<f64>> = angles
        .par_iter()
        .map(|&beta| {
            gammas
                .iter()
                .map(|&gamma| {
                    let (src, dir) = ray(geometry.source_iso_mm, beta, gamma);
                    ray_integral(image, geometry.pixel_mm, src, dir, max_step_mm)
                })
                .collect()
        })
        .collect();
    let data = Array2::from_shape_vec(
        (geometry.n_views, geometry.n_detectors),
        rows.into_iter().flatten().collect(),
    )
    .expect("row lengths match detector count");
    Ok(Sinogram {
        geometry: geometry.clone(),
        angles,
        data,
    })
}

/// Keeps `n_keep` views at indices `round(k · n_views / n_keep)`.
pub fn subsample_views(sino: &Sinogram, n_keep: usize) -> Result<Sinogram> {
    let n = sino.n_views();
    if n_keep == 0 || n_keep > n {
        return Err(Error::config(
            "n_keep",
            format!("cannot keep {n_keep} of {n} views"),
        ));
    }
    let idx = kept_view_indices(n, n_keep);
    let data = sino.data.select(ndarray::Axis(0), &idx);
    let mut geometry = sino.geometry.clone();
    geometry.n_views = n_keep;
    Ok(Sinogram {
        geometry,
        angles: idx.iter().map(|&i| sino.angles[i]).collect(),
        data,
    })
}

pub fn kept_view_indices(n_views: usize, n_keep: usize) -> Vec<usize> {
    (0..n_keep)
        .map(|k| ((k as f64 * n_views as f64 / n_keep as f64).round() as usize).min(n_views - 1))
        .collect()
}
