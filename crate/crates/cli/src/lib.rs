//! File formats, image IO, configuration and the command line around
//! [`smokeflow_core`].

pub mod app;
pub mod config;
pub mod flo;
pub mod imageio;

pub use smokeflow_core as core;
