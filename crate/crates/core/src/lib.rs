//! Multiplane point-mass gravitational lensing: image finding, critical
//! curves and caustics, and the construction of lenses with many images.

pub mod builder;
pub mod caustics;
pub mod cli;
pub mod cluster;
pub mod cosmology;
pub mod error;
pub mod lens;
pub mod linalg;
pub mod rhie;
pub mod scene;
pub mod solver;
pub mod svg;

pub use error::{LensError, Result};
