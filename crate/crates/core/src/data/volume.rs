use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Affine map from raw values to `[0, 1]`: `(v − min) / (max − min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub min: f64,
    pub max: f64,
}

impl NormBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::config(
                "normalization",
                format!("bounds [{min}, {max}] are empty or not finite"),
            ));
        }
        Ok(Self { min, max })
    }

    /// Bounds spanning every value of every volume.
    pub fn covering<'a>(volumes: impl IntoIterator<Item = &'a Volume>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in volumes {
            for &x in &v.data {
                if !x.is_finite() {
                    return Err(Error::config("normalization", "volume holds non-finite values"));
                }
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        Self::new(lo, hi)
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Linear map from raw values to Hounsfield units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuCalibration {
    pub intercept: f64,
    pub slope: f64,
}

impl HuCalibration {
    /// Phantom units: 0 is air (−1000 HU), 0.45 is soft tissue (40 HU).
    pub fn phantom() -> Self {
        Self {
            intercept: -1000.0,
            slope: 1040.0 / 0.45,
        }
    }

    pub fn to_hu(&self, raw: f64) -> f64 {
        self.intercept + self.slope * raw
    }
}

impl Default for HuCalibration {
    fn default() -> Self {
        Self::phantom()
    }
}

/// A stack of `slices × n × n` images.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub data: Array3<f64>,
    pub pixel_mm: f64,
    /// Present when `data` is normalized; maps it back to raw units.
    pub norm: Option<NormBounds>,
    pub hu: HuCalibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeSidecar {
    pub shape: [usize; 3],
    pub dtype: String,
    pub pixel_mm: f64,
    pub normalization: Option<NormBounds>,
    pub hu_calibration: HuCalibration,
    pub sha256: String,
}

impl Volume {
    pub fn new(data: Array3<f64>, pixel_mm: f64) -> Self {
        Self {
            data,
            pixel_mm,
            norm: None,
            hu: HuCalibration::default(),
        }
    }

    pub fn n_slices(&self) -> usize {
        self.data.dim().0
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Maps a value of this volume to HU through the stored bounds and calibration.
    pub fn value_to_hu(&self, v: f64) -> f64 {
        let raw = self.norm.map_or(v, |b| b.inverse(v));
        self.hu.to_hu(raw)
    }

    /// Writes `<stem>.raw` (little-endian f64, slice-major) and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<VolumeSidecar> {
        if let Some(dir) = stem.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_le_bytes();
        let (s, h, w) = self.data.dim();
        let meta = VolumeSidecar {
            shape: [s, h, w],
            dtype: "f64".into(),
            pixel_mm: self.pixel_mm,
            normalization: self.norm,
            hu_calibration: self.hu,
            sha256: hex::encode(Sha256::digest(&bytes)),
        };
        let raw = raw_path(stem);
        fs::write(&raw, &bytes).map_err(|e| Error::io(&raw, e))?;
        let side = sidecar_path(stem);
        let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
        fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
        Ok(meta)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let side = sidecar_path(stem);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: VolumeSidecar =
            serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))?;
        if meta.dtype != "f64" {
            return Err(Error::format(&side, format!("unsupported dtype {}", meta.dtype)));
        }
        let raw = raw_path(stem);
        let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
        let n: usize = meta.shape.iter().product();
        if bytes.len() != n * 8 {
            return Err(Error::format(
                &raw,
                format!("{} bytes for shape {:?}", bytes.len(), meta.shape),
            ));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let [s, h, w] = meta.shape;
        let data = Array3::from_shape_vec((s, h, w), values).expect("length checked");
        Ok(Self {
            data,
            pixel_mm: meta.pixel_mm,
            norm: meta.normalization,
            hu: meta.hu_calibration,
        })
    }
}

pub fn raw_path(stem: &Path) -> PathBuf {
    stem.with_extension("raw")
}

pub fn sidecar_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

/// Maps raw values to `[0, 1]` with dataset-global bounds.
pub fn normalize_volume(v: &Volume, bounds: NormBounds) -> Result<Volume> {
    if v.norm.is_some() {
        return Err(Error::config("normalization", "volume is already normalized"));
    }
    Ok(Volume {
        data: v.data.mapv(|x| bounds.forward(x)),
        norm: Some(bounds),
        ..v.clone()
    })
}

pub fn denormalize_volume(v: &Volume) -> Result<Volume> {
    let b = v
        .norm
        .ok_or_else(|| Error::config("normalization", "volume is not normalized"))?;
    Ok(Volume {
        data: v.data.mapv(|u| b.inverse(u)),
        norm: None,
        ..v.clone()
    })
}

/// Display window `[lo, hi]` in HU.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuWindow {
    pub lo: f64,
    pub hi: f64,
}

impl HuWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::config("window", format!("lower bound {lo} must be below {hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn from_center_width(center: f64, width: f64) -> Result<Self> {
        Self::new(center - width / 2.0, center + width / 2.0)
    }

    /// Abdominal soft-tissue window.
    pub fn soft_tissue() -> Self {
        Self { lo: -160.0, hi: 240.0 }
    }

    /// Clamped position of `hu` inside the window, in `[0, 1]`.
    pub fn apply(&self, hu: f64) -> f64 {
        ((hu - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

/// Windowed display image of one slice, values in `[0, 1]`.
pub fn hu_window(v: &Volume, slice: usize, window: HuWindow) -> Result<ndarray::Array2<f64>> {
    if slice >= v.n_slices() {
        return Err(Error::config(
            "slice",
            format!("slice {slice} out of {} slices", v.n_slices()),
        ));
    }
    Ok(v
        .data
        .index_axis(ndarray::Axis(0), slice)
        .mapv(|x| window.apply(v.value_to_hu(x))))
}
