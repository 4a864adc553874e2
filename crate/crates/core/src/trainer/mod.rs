//! Adam, the learning-rate schedule and the alternating critic/generator
//! training protocol with checkpointing and validation.

mod adam;
mod config;
mod run;
mod state;
mod steps;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use config::{lr_at_epoch, TrainConfig};
pub use run::{train_loop, validate, LogRow, RunDir, TrainReport, Validation, LOG_HEADER};
pub use state::{load_generator, Model, TrainState};
pub use steps::{
    generate, generator_gradients, train_step_critic, train_step_generator, CriticMetrics,
    GeneratorMetrics,
};
