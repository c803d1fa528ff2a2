//! Rotation-invariant point-cloud features from spherical responses, S² and SO(3)
//! correlation, and Haar integration.

pub mod detection;
pub mod envelope;
pub mod equivariant;
pub mod error;
pub mod features;
pub mod geometry;
pub mod harmonic;
pub mod model;
pub mod sphere;

pub use error::{Error, Result};
