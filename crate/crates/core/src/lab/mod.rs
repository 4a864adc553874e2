//! Configuration and the simulate / train / reconstruct / eval commands.

mod commands;
mod config;
mod figures;

pub use commands::{
    cmd_eval, cmd_reconstruct, cmd_simulate, cmd_train, phantom_seed, reconstruct_volume,
    EvalReport,
};
pub use config::{
    DiscriminatorSection, EvalSection, GeometrySection, LabConfig, PhantomPreset,
    SimulationSection, PRESETS,
};
pub use figures::{side_by_side, write_png};
