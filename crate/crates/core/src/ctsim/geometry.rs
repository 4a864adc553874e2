use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equiangular (curved detector) fan-beam geometry over a full 2π scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanBeamGeometry {
    pub source_iso_mm: f64,
    pub source_detector_mm: f64,
    pub n_views: usize,
    pub n_detectors: usize,
    /// Angular spacing between adjacent detector channels, in radians.
    pub detector_pitch_rad: f64,
    pub pixel_mm: f64,
    pub image_n: usize,
}

pub const SOURCE_ISO_MM: f64 = 595.0;
pub const SOURCE_DETECTOR_MM: f64 = 1085.6;
pub const PIXEL_MM: f64 = 0.664;

impl FanBeamGeometry {
    /// Scanner distances and pixel size of the clinical data, with a detector
    /// arc that covers the whole square image grid.
    pub fn new(image_n: usize, n_views: usize, n_detectors: usize) -> Self {
        let mut g = Self {
            source_iso_mm: SOURCE_ISO_MM,
            source_detector_mm: SOURCE_DETECTOR_MM,
            n_views,
            n_detectors,
            detector_pitch_rad: 0.0,
            pixel_mm: PIXEL_MM,
            image_n,
        };
        g.detector_pitch_rad = g.covering_pitch();
        g
    }

    /// 128×128 grid, 512 detectors, 512 views.
    pub fn desk() -> Self {
        Self::new(128, 512, 512)
    }

    /// 512×512 grid reconstructed from 2304 views.
    pub fn clinical() -> Self {
        Self::new(512, 2304, 1024)
    }

    /// Pitch whose fan spans the circle circumscribing the image plus one pixel.
    pub fn covering_pitch(&self) -> f64 {
        let radius = (self.image_n as f64 / 2.0 * 2f64.sqrt() + 1.0) * self.pixel_mm;
        let half = (radius / self.source_iso_mm).min(1.0).asin();
        2.0 * half / (self.n_detectors.max(2) - 1) as f64
    }

    pub fn fov_radius_mm(&self) -> f64 {
        self.image_n as f64 / 2.0 * self.pixel_mm
    }

    pub fn fan_half_angle(&self) -> f64 {
        (self.n_detectors as f64 - 1.0) / 2.0 * self.detector_pitch_rad
    }

    /// Angle of channel `j` relative to the central ray.
    pub fn detector_angle(&self, j: usize) -> f64 {
        (j as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_pitch_rad
    }

    pub fn view_angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_views as f64
    }

    pub fn view_angles(&self) -> Vec<f64> {
        (0..self.n_views).map(|k| self.view_angle(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source_iso_mm > 0.0) {
            return Err(Error::config("geometry.source_iso_mm", "must be positive"));
        }
        if !(self.source_detector_mm > self.source_iso_mm) {
            return Err(Error::config(
                "geometry.source_detector_mm",
                "must exceed source_iso_mm",
            ));
        }
        if !(self.pixel_mm > 0.0) {
            return Err(Error::config("geometry.pixel_mm", "must be positive"));
        }
        if self.image_n == 0 {
            return Err(Error::config("geometry.image_n", "must be positive"));
        }
        if self.n_views == 0 {
            return Err(Error::config("geometry.n_views", "must be positive"));
        }
        if self.n_detectors < 2 {
            return Err(Error::config("geometry.n_detectors", "need at least 2 channels"));
        }
        if !(self.detector_pitch_rad > 0.0) {
            return Err(Error::config("geometry.detector_pitch_rad", "must be positive"));
        }
        let r = self.fov_radius_mm();
        if r >= self.source_iso_mm {
            return Err(Error::config(
                "geometry.source_iso_mm",
                "source lies inside the reconstruction circle",
            ));
        }
        let needed = (r / self.source_iso_mm).asin();
        if self.fan_half_angle() < needed {
            return Err(Error::config(
                "geometry.detector_pitch_rad",
                format!(
                    "fan half-angle {:.5} rad does not cover the inscribed circle ({needed:.5} rad)",
                    self.fan_half_angle()
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        FanBeamGeometry::desk().validate().unwrap();
        FanBeamGeometry::clinical().validate().unwrap();
    }

    #[test]
    fn narrow_fan_rejected() {
        let mut g = FanBeamGeometry::desk();
        g.detector_pitch_rad /= 4.0;
        let err = g.validate().unwrap_err().to_string();
        assert!(err.contains("detector_pitch_rad"), "{err}");
    }

    #[test]
    fn distances_ordered() {
        let mut g = FanBeamGeometry::desk();
        g.source_detector_mm = 500.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn central_channel_symmetric() {
        let g = FanBeamGeometry::new(64, 8, 5);
        assert_eq!(g.detector_angle(2), 0.0);
        assert!((g.detector_angle(0) + g.detector_angle(4)).abs() < 1e-15);
    }
}
