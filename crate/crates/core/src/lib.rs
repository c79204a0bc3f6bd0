//! Curve-shortening flows with power-law speed, described through support
//! functions: self-shrinkers, their linearized spectra, normalized flow,
//! and ancient solutions converging to a shrinker.

pub mod ancient;
pub mod cli;
pub mod error;
pub mod export;
pub mod flow;
pub mod fourier;
pub mod geometry;
pub mod ode;
pub mod parallel;
pub mod shrinker;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::SupportFunction;
pub use shrinker::{Shape, ShrinkerProfile};
