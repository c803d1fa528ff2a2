//! Spherical grids, point responses and response-driven subsampling.

mod grid;
mod response;
mod sampling;

pub use grid::{make_grid, SphereGrid, SphericalSignal};
pub use response::{refined_response_scores, respond, respond_at, respond_from, response_scores, ResponseConfig};
pub use sampling::{attention_scores, attention_subset, downsample, ConfidenceMap};
