pub mod cli;
pub mod config;
pub mod discrete;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod hermite;
pub mod lowerbound;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
