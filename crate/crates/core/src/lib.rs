pub mod basis;
pub mod config;
pub mod curve;
pub mod data;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod io;
pub mod multisite;
pub mod optim;
pub mod posterior;
pub mod rng;
pub mod simulation;
pub(crate) mod special;

pub use error::{Error, Result};
