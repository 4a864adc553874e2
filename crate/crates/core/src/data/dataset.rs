use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::patches::{depth_offsets, patch_offsets};
use super::simulate::{SimulatedPair, SimulationSpec};
use super::volume::{normalize_volume, NormBounds, Volume};
use crate::autodiff::{Real, Tensor};
use crate::ctsim::FanBeamGeometry;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub phantom_seed: u64,
    pub geometry: FanBeamGeometry,
    pub n_keep: usize,
}

/// Index-aligned few-view input and full-view target, both normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedVolume {
    pub id: String,
    pub role: Role,
    pub few_view: Volume,
    pub full_view: Volume,
    pub provenance: Provenance,
}

impl PairedVolume {
    pub fn new(
        id: String,
        role: Role,
        few_view: Volume,
        full_view: Volume,
        provenance: Provenance,
    ) -> Result<Self> {
        if few_view.data.dim() != full_view.data.dim() {
            return Err(Error::config(
                "pair",
                format!(
                    "{id}: few-view {:?} vs full-view {:?}",
                    few_view.data.dim(),
                    full_view.data.dim()
                ),
            ));
        }
        Ok(Self {
            id,
            role,
            few_view,
            full_view,
            provenance,
        })
    }
}

/// Normalizes simulated pairs with bounds covering every few-view and full-view volume.
pub fn assemble_pairs(
    raw: &[SimulatedPair],
    spec: &SimulationSpec,
    n_validation: usize,
) -> Result<(Vec<PairedVolume>, NormBounds)> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bounds = NormBounds::covering(raw.iter().flat_map(|p| [&p.few_view, &p.full_view]))?;
    let n_train = raw.len().saturating_sub(n_validation);
    let pairs = raw
        .iter()
        .enumerate()
        .map(|(i, p)| {
            PairedVolume::new(
                format!("pair_{i:04}"),
                if i < n_train { Role::Train } else { Role::Validation },
                normalize_volume(&p.few_view, bounds)?,
                normalize_volume(&p.full_view, bounds)?,
                Provenance {
                    phantom_seed: p.seed,
                    geometry: spec.geometry.clone(),
                    n_keep: spec.n_keep,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, bounds))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub patch: usize,
    pub stride: usize,
    pub n_slices: usize,
    pub depth_stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch: 64,
            stride: 32,
            n_slices: 9,
            depth_stride: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchIndex {
    pub pair: usize,
    pub depth: usize,
    pub row: usize,
    pub col: usize,
}

/// Lazily cropped paired patches over a set of volumes.
#[derive(Clone, Debug)]
pub struct PatchDataset {
    pub pairs: Vec<PairedVolume>,
    pub config: PatchConfig,
    index: Vec<PatchIndex>,
}

impl PatchDataset {
    /// Enumerates patches per pair by start slice, then row-major position.
    pub fn new(pairs: Vec<PairedVolume>, config: PatchConfig) -> Result<Self> {
        let mut index = Vec::new();
        for (pi, p) in pairs.iter().enumerate() {
            let (d, h, w) = p.full_view.data.dim();
            let depths = depth_offsets(d, config.n_slices, config.depth_stride)?;
            let rows = patch_offsets(h, config.patch, config.stride)?;
            let cols = patch_offsets(w, config.patch, config.stride)?;
            for &depth in &depths {
                for &row in &rows {
                    for &col in &cols {
                        index.push(PatchIndex { pair: pi, depth, row, col });
                    }
                }
            }
        }
        Ok(Self { pairs, config, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self) -> &[PatchIndex] {
        &self.index
    }

    /// Few-view and full-view crops for patch `i`.
    pub fn get(&self, i: usize) -> (Array3<f64>, Array3<f64>) {
        let ix = self.index[i];
        let c = &self.config;
        let p = &self.pairs[ix.pair];
        let sl = s![
            ix.depth..ix.depth + c.n_slices,
            ix.row..ix.row + c.patch,
            ix.col..ix.col + c.patch
        ];
        (
            p.few_view.data.slice(sl).to_owned(),
            p.full_view.data.slice(sl).to_owned(),
        )
    }

    /// Batches `[B, 1, D, P, P]` (or `[B, 1, P, P]` when `planar`).
    pub fn batch<T: Real>(&self, ids: &[usize], planar: bool) -> Result<(Tensor<T>, Tensor<T>)> {
        let c = &self.config;
        if planar && c.n_slices != 1 {
            return Err(Error::config(
                "patch.n_slices",
                "2-D networks need single-slice patches",
            ));
        }
        let shape = if planar {
            vec![ids.len(), 1, c.patch, c.patch]
        } else {
            vec![ids.len(), 1, c.n_slices, c.patch, c.patch]
        };
        let mut few = Vec::with_capacity(shape.iter().product());
        let mut full = Vec::with_capacity(few.capacity());
        for &i in ids {
            let (a, b) = self.get(i);
            few.extend(a.iter().map(|&v| T::of(v)));
            full.extend(b.iter().map(|&v| T::of(v)));
        }
        Ok((Tensor::new(shape.clone(), few)?, Tensor::new(shape, full)?))
    }

    /// Seeded permutation of all patch indices for one epoch.
    pub fn epoch_order(&self, seed: u64, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        order
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: String,
    pub role: Role,
    /// Volume stems relative to the dataset directory.
    pub few_view: String,
    pub full_view: String,
    pub few_sha256: String,
    pub full_sha256: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub normalization: NormBounds,
    pub simulation: SimulationSpec,
    pub pairs: Vec<PairEntry>,
}

pub fn save_dataset(
    dir: &Path,
    pairs: &[PairedVolume],
    bounds: NormBounds,
    spec: &SimulationSpec,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(pairs.len());
    for p in pairs {
        let few = format!("{}/few_view", p.id);
        let full = format!("{}/full_view", p.id);
        let a = p.few_view.save(&dir.join(&few))?;
        let b = p.full_view.save(&dir.join(&full))?;
        entries.push(PairEntry {
            id: p.id.clone(),
            role: p.role,
            few_view: few,
            full_view: full,
            few_sha256: a.sha256,
            full_sha256: b.sha256,
            provenance: p.provenance.clone(),
        });
    }
    let manifest = DatasetManifest {
        format_version: 1,
        normalization: bounds,
        simulation: spec.clone(),
        pairs: entries,
    };
    let path = manifest_path(dir);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = manifest_path(dir);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<PairedVolume>)> {
    let manifest = load_manifest(dir)?;
    let pairs = manifest
        .pairs
        .iter()
        .map(|e| {
            PairedVolume::new(
                e.id.clone(),
                e.role,
                Volume::load(&dir.join(&e.few_view))?,
                Volume::load(&dir.join(&e.full_view))?,
                e.provenance.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, pairs))
}

/// Splits pairs by role into training and validation patch sets.
pub fn split_by_role(pairs: Vec<PairedVolume>, config: PatchConfig) -> Result<(PatchDataset, PatchDataset)> {
    let (train, val): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|p| p.role == Role::Train);
    Ok((PatchDataset::new(train, config)?, PatchDataset::new(val, config)?))
}
