pub mod autodiff;
pub mod ctsim;
pub mod data;
pub mod error;
pub mod lab;
pub mod net;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
