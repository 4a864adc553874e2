use ndarray::{stack, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::volume::{HuCalibration, Volume};
use crate::ctsim::{fbp, forward_project, make_phantom_volume, subsample_views, FanBeamGeometry, PhantomSpec};
use crate::error::{Error, Result};

/// Everything needed to turn a seed into a few-view / full-view volume pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub phantom: PhantomSpec,
    pub geometry: FanBeamGeometry,
    pub n_slices: usize,
    /// Slice spacing in normalized phantom units.
    pub slice_step: f64,
    /// Views kept for the few-view reconstruction.
    pub n_keep: usize,
}

impl SimulationSpec {
    pub fn desk() -> Self {
        Self {
            phantom: PhantomSpec::abdomen(),
            geometry: FanBeamGeometry::desk(),
            n_slices: 12,
            slice_step: 0.02,
            n_keep: 75,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.phantom.validate()?;
        if self.n_slices == 0 {
            return Err(Error::config("simulation.n_slices", "must be positive"));
        }
        if !(self.slice_step > 0.0) {
            return Err(Error::config("simulation.slice_step", "must be positive"));
        }
        if self.n_keep == 0 || self.n_keep > self.geometry.n_views {
            return Err(Error::config(
                "simulation.n_keep",
                format!("must lie in 1..={}", self.geometry.n_views),
            ));
        }
        Ok(())
    }
}

/// Raw (unnormalized) volumes of one simulated phantom.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedPair {
    pub seed: u64,
    pub phantom: Volume,
    pub full_view: Volume,
    pub few_view: Volume,
}

fn to_volume(slices: &[Array2<f64>], pixel_mm: f64) -> Volume {
    let views: Vec<_> = slices.iter().map(|s| s.view()).collect();
    let mut v = Volume::new(stack(Axis(0), &views).expect("equal slice shapes"), pixel_mm);
    v.hu = HuCalibration::phantom();
    v
}

/// Phantom, full-view FBP and few-view FBP for every slice of one seed.
pub fn simulate_pair(spec: &SimulationSpec, seed: u64) -> Result<SimulatedPair> {
    spec.validate()?;
    let g = &spec.geometry;
    let slices = make_phantom_volume(&spec.phantom, g.image_n, spec.n_slices, spec.slice_step, seed)?;
    let mut full = Vec::with_capacity(slices.len());
    let mut few = Vec::with_capacity(slices.len());
    for s in &slices {
        let sino = forward_project(s, g)?;
        full.push(fbp(&sino));
        few.push(fbp(&subsample_views(&sino, spec.n_keep)?));
    }
    Ok(SimulatedPair {
        seed,
        phantom: to_volume(&slices, g.pixel_mm),
        full_view: to_volume(&full, g.pixel_mm),
        few_view: to_volume(&few, g.pixel_mm),
    })
}
