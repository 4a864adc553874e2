//! Volumes on disk, normalization, patching and paired dataset assembly.

mod dataset;
mod patches;
mod simulate;
mod volume;

pub use dataset::{
    assemble_pairs, load_dataset, load_manifest, manifest_path, save_dataset, split_by_role,
    DatasetManifest, PairEntry, PairedVolume, PatchConfig, PatchDataset, PatchIndex, Provenance,
    Role,
};
pub use patches::{depth_offsets, extract_patches_2d, patch_offsets, stack_patches_3d};
pub use simulate::{simulate_pair, SimulatedPair, SimulationSpec};
pub use volume::{
    denormalize_volume, hu_window, normalize_volume, raw_path, sidecar_path, HuCalibration,
    HuWindow, NormBounds, Volume, VolumeSidecar,
};
