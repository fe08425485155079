pub mod augment;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod generators;
pub mod gp;
pub mod model;
pub mod sampling;
pub mod sde;
pub mod seed;
pub mod stats;
pub mod timeseries;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
