//! Per-point feature assembly: affine coordinates, interpolation, attention gating,
//! pooling and the deformation module.

mod affine;
mod attention;
mod deform;
mod field;
mod linear;
mod pool;

pub use affine::{affine_coords, AffineCoords};
pub use attention::{attention_combine, softmax2, Attention, AttentionTape};
pub use deform::{deform, DeformParams};
pub use field::{interpolate, FeatureField, FeatureRole, Interpolator};
pub use linear::Linear;
pub use pool::{global_pool, max_pool, max_pool_backward, PoolMode};
