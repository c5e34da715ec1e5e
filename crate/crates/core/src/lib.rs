//! Numerical toolkit for time-dependent (nonautonomous) expanding circle
//! dynamics.
//!
//! The state space is always the circle of unit circumference, represented
//! as `[0, 1)` with the arc distance `d(x, y) = min(|x-y|, 1-|x-y|)`.
//! A system is a sequence of smooth expanding maps, given by their lifts to
//! the real line; compositions, Bowen metrics, separated/spanning counts,
//! transfer-operator density evolution, pressure tables, equi-conjugacies
//! and Frink-style adapted metrics are all computed on top of that substrate.

pub mod circle;
pub mod conjugacy;
pub mod entropy;
mod error;
pub mod estimator;
pub mod expansivity;
pub mod metrics;
pub mod pressure;
pub mod systems;
pub mod transfer;

pub use error::{NdsError, Result};
pub use systems::{CircleMap, MapFamily, NdsSequence};
pub use transfer::GridDensity;
