//! Library side of the experiment runner: configuration schema, execution,
//! and the shipped preset registry. The binary is a thin dispatcher on top.

pub mod config;
pub mod presets;
pub mod runner;
