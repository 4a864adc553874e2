//! Generator and critic networks: declarative specs, parameter sets, forward
//! passes and a named-tensor checkpoint format.

pub mod checkpoint;
mod discriminator;
mod generator;
mod params;
mod spec;

pub use discriminator::{build_discriminator, discriminator_forward};
pub use generator::{build_generator, build_generator_with, dense_block_forward, generator_forward};
pub use params::{BoundParams, NetworkParams};
pub use spec::{
    count_discriminator_parameters, count_parameters, discriminator_layers, generator_layers,
    DiscriminatorSpec, GeneratorSpec, LayerDesc, LayerKind, Rank,
};
