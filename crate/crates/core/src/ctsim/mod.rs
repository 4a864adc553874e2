//! Phantoms, fan-beam projection and filtered backprojection.

mod fbp;
mod geometry;
mod phantom;
mod projector;

pub use fbp::{fbp, ramp_filter, ramp_kernel};
pub use geometry::{FanBeamGeometry, PIXEL_MM, SOURCE_DETECTOR_MM, SOURCE_ISO_MM};
pub use phantom::{
    make_phantom, make_phantom_volume, Background, Ellipse, Ellipsoid, PhantomSpec,
    RandomFeatures,
};
pub use projector::{
    forward_project, forward_project_with_step, kept_view_indices, subsample_views, Sinogram,
};
