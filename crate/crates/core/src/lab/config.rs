use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctsim::{FanBeamGeometry, PhantomSpec, PIXEL_MM, SOURCE_DETECTOR_MM, SOURCE_ISO_MM};
use crate::data::{HuWindow, PatchConfig, SimulationSpec};
use crate::error::{Error, Result};
use crate::net::{DiscriminatorSpec, GeneratorSpec, Rank};
use crate::trainer::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomPreset {
    Abdomen,
    SheppLogan,
}

impl PhantomPreset {
    pub fn spec(self) -> PhantomSpec {
        match self {
            Self::Abdomen => PhantomSpec::abdomen(),
            Self::SheppLogan => PhantomSpec::shepp_logan(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub image_n: usize,
    pub n_views: usize,
    pub n_detectors: usize,
    pub source_iso_mm: f64,
    pub source_detector_mm: f64,
    pub pixel_mm: f64,
    /// Angular detector pitch; derived from the field of view when absent.
    pub detector_pitch_rad: Option<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = FanBeamGeometry::desk();
        Self {
            image_n: g.image_n,
            n_views: g.n_views,
            n_detectors: g.n_detectors,
            source_iso_mm: SOURCE_ISO_MM,
            source_detector_mm: SOURCE_DETECTOR_MM,
            pixel_mm: PIXEL_MM,
            detector_pitch_rad: None,
        }
    }
}

impl GeometrySection {
    pub fn geometry(&self) -> FanBeamGeometry {
        let mut g = FanBeamGeometry::new(self.image_n, self.n_views, self.n_detectors);
        g.source_iso_mm = self.source_iso_mm;
        g.source_detector_mm = self.source_detector_mm;
        g.pixel_mm = self.pixel_mm;
        g.detector_pitch_rad = self.detector_pitch_rad.unwrap_or_else(|| g.covering_pitch());
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub phantom: PhantomPreset,
    pub n_phantoms: usize,
    /// Trailing phantoms held out for validation.
    pub n_validation: usize,
    pub n_slices: usize,
    pub slice_step: f64,
    pub n_keep: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimulationSpec::desk();
        Self {
            phantom: PhantomPreset::Abdomen,
            n_phantoms: 20,
            n_validation: 4,
            n_slices: s.n_slices,
            slice_step: s.slice_step,
            n_keep: s.n_keep,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorSection {
    pub conv_filters: Vec<usize>,
    pub conv_kernel: usize,
    pub stride: usize,
    pub fc_sizes: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorSection {
    fn default() -> Self {
        let d = DiscriminatorSpec::new(Rank::Three, [1, 1, 1]);
        Self {
            conv_filters: d.conv_filters,
            conv_kernel: d.conv_kernel,
            stride: d.stride,
            fc_sizes: d.fc_sizes,
            leaky_slope: d.leaky_slope,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub window_lo_hu: f64,
    pub window_hi_hu: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let w = HuWindow::soft_tissue();
        Self {
            window_lo_hu: w.lo,
            window_hi_hu: w.hi,
        }
    }
}

/// Complete lab configuration. Every section is optional in the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub seed: u64,
    pub deterministic: bool,
    /// Root for the dataset, run, reconstructions and evaluation outputs.
    pub out: PathBuf,
    pub geometry: GeometrySection,
    pub simulation: SimulationSection,
    pub patch: PatchConfig,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: false,
            out: PathBuf::from("lab_out"),
            geometry: GeometrySection::default(),
            simulation: SimulationSection::default(),
            patch: PatchConfig::default(),
            generator: GeneratorSpec::dear3d(32),
            discriminator: DiscriminatorSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

pub const PRESETS: [&str; 5] = [
    "dear2d-mse",
    "dear2d-mse-ssim",
    "dear2d-i",
    "dear3d-no-gan",
    "dear3d",
];

impl LabConfig {
    /// Ablation presets: network rank/width and which loss terms take part.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self::default();
        let planar = |c: &mut Self, spec: GeneratorSpec| {
            c.generator = spec;
            c.patch.n_slices = 1;
        };
        match name {
            "dear2d-mse" => {
                planar(&mut c, GeneratorSpec::dear2d());
                c.train.weights.lambda_sl = 0.0;
                c.train.weights.lambda_al = 0.0;
            }
            "dear2d-mse-ssim" => {
                planar(&mut c, GeneratorSpec::dear2d());
                c.train.weights.lambda_al = 0.0;
            }
            "dear2d-i" => {
                planar(&mut c, GeneratorSpec::dear2d_i());
                c.train.weights.lambda_al = 0.0;
            }
            "dear3d-no-gan" => c.train.weights.lambda_al = 0.0,
            "dear3d" => {}
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
                ))
            }
        }
        Ok(c)
    }

    /// Parses TOML text. A top-level `preset` key selects the base values that
    /// the remaining keys override.
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_preset(text, None)
    }

    /// As [`LabConfig::from_toml`], with `preset` replacing any preset named in the text.
    pub fn from_toml_with_preset(text: &str, preset: Option<&str>) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
        if let Some(p) = preset {
            table.insert("preset".into(), toml::Value::String(p.into()));
        }
        let base = match table.remove("preset") {
            Some(toml::Value::String(name)) => Self::preset(&name)?,
            Some(_) => return Err(Error::config("preset", "must be a string")),
            None => Self::default(),
        };
        let mut merged = toml::Table::try_from(&base).expect("config serializes");
        merge(&mut merged, table);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn simulation_spec(&self) -> SimulationSpec {
        SimulationSpec {
            phantom: self.simulation.phantom.spec(),
            geometry: self.geometry.geometry(),
            n_slices: self.simulation.n_slices,
            slice_step: self.simulation.slice_step,
            n_keep: self.simulation.n_keep,
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        let d = &self.discriminator;
        let depth = match self.generator.rank {
            Rank::Two => 1,
            Rank::Three => self.patch.n_slices,
        };
        DiscriminatorSpec {
            rank: self.generator.rank,
            conv_filters: d.conv_filters.clone(),
            conv_kernel: d.conv_kernel,
            stride: d.stride,
            fc_sizes: d.fc_sizes.clone(),
            leaky_slope: d.leaky_slope,
            input_extent: [depth, self.patch.patch, self.patch.patch],
        }
    }

    /// The train config with the lab seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn window(&self) -> Result<HuWindow> {
        HuWindow::new(self.eval.window_lo_hu, self.eval.window_hi_hu)
            .map_err(|_| Error::config("eval.window_lo_hu", "must be below eval.window_hi_hu"))
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out.join("dataset")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join("run")
    }

    pub fn reconstruction_dir(&self) -> PathBuf {
        self.out.join("reconstructions")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<()> {
        let sim = self.simulation_spec();
        sim.validate()?;
        let s = &self.simulation;
        if s.n_phantoms == 0 {
            return Err(Error::config("simulation.n_phantoms", "must be positive"));
        }
        if s.n_validation >= s.n_phantoms {
            return Err(Error::config(
                "simulation.n_validation",
                "must leave at least one training phantom",
            ));
        }
        let p = &self.patch;
        if p.patch == 0 || p.stride == 0 || p.depth_stride == 0 || p.n_slices == 0 {
            return Err(Error::config("patch", "sizes and strides must be positive"));
        }
        if p.patch > self.geometry.image_n {
            return Err(Error::config("patch.patch", "larger than the image"));
        }
        if p.n_slices > s.n_slices {
            return Err(Error::config(
                "patch.n_slices",
                format!("stack of {} exceeds {} simulated slices", p.n_slices, s.n_slices),
            ));
        }
        self.generator.validate()?;
        if self.generator.rank == Rank::Two && p.n_slices != 1 {
            return Err(Error::config("patch.n_slices", "2-D generators train on single slices"));
        }
        if p.patch < self.generator.min_extent() {
            return Err(Error::config(
                "patch.patch",
                format!("generator needs at least {} pixels", self.generator.min_extent()),
            ));
        }
        self.discriminator_spec().validate()?;
        self.train.validate()?;
        self.window()?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
