use std::f64::consts::PI;

use rayon::prelude::*;

use super::grid::{SphereGrid, SphericalSignal};
use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

/// Parameters of the omni-directional response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseConfig {
    pub radius: f64,
    pub partitions: usize,
    pub use_normals: bool,
}

impl ResponseConfig {
    pub fn new(radius: f64) -> Self {
        Self {
            radius,
            partitions: 1,
            use_normals: false,
        }
    }

    pub fn with_normals(radius: f64, partitions: usize) -> Self {
        Self {
            radius,
            partitions,
            use_normals: true,
        }
    }

    pub fn channels(&self) -> usize {
        if self.use_normals {
            self.partitions
        } else {
            1
        }
    }

    fn validate(&self, cloud: &PointCloud) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("response radius must be positive, got {}", self.radius)));
        }
        if self.partitions == 0 {
            return Err(Error::Config("at least one normal partition is required".into()));
        }
        if self.use_normals && cloud.normals().is_none() {
            return Err(Error::Config("normal partitioning requested but the cloud has no normals".into()));
        }
        Ok(())
    }
}

/// Offsets `x_k - x_i` of points outside the closed ball of radius `r`, with their channel.
fn contributors(cloud: &PointCloud, center: usize, config: &ResponseConfig) -> Vec<(Point, usize)> {
    let xi = cloud.point(center);
    let ni = cloud.normals().map(|n| n[center]);
    let bin_width = PI / (2 * config.partitions) as f64;
    cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(k, xk)| {
            let d = xk - xi;
            if d.norm() <= config.radius {
                return None;
            }
            let channel = match (config.use_normals, ni) {
                (true, Some(ni)) => {
                    let nk = cloud.normals().expect("checked")[k];
                    // Normals are unoriented: fold the angle into [0, π/2].
                    let angle = nk.dot(&ni).abs().clamp(-1.0, 1.0).acos();
                    ((angle / bin_width) as usize).min(config.partitions - 1)
                }
                _ => 0,
            };
            Some((d, channel))
        })
        .collect()
}

/// Response of the cloud seen from `cloud[center]` on every grid direction scaled by `r`:
/// `Σ_{‖x_k - x_i‖ > r} max(0, r yᵀ(x_k - x_i))`, split by normal-angle bin when enabled.
pub fn respond(
    cloud: &PointCloud,
    center: usize,
    config: &ResponseConfig,
    grid: &SphereGrid,
) -> Result<SphericalSignal> {
    if center >= cloud.len() {
        return Err(Error::Size(format!("center {center} out of range for {} points", cloud.len())));
    }
    config.validate(cloud)?;
    let terms = contributors(cloud, center, config);
    let n = grid.len();
    let mut values = vec![0.0; config.channels() * n];
    for (j, y) in grid.directions().iter().enumerate() {
        let ry = y * config.radius;
        for (d, c) in &terms {
            let v = ry.dot(d);
            if v > 0.0 {
                values[c * n + j] += v;
            }
        }
    }
    SphericalSignal::from_values(grid.bandwidth(), config.channels(), values)
}

/// Response seen from an arbitrary origin, ignoring normals: every point farther than
/// `r` from `origin` contributes `max(0, r yᵀ(x_k - origin))`.
pub fn respond_from(cloud: &PointCloud, origin: &Point, radius: f64, grid: &SphereGrid) -> Result<SphericalSignal> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("response radius must be positive, got {radius}")));
    }
    let terms: Vec<Point> = cloud
        .points()
        .iter()
        .map(|x| x - origin)
        .filter(|d| d.norm() > radius)
        .collect();
    let values = grid
        .directions()
        .iter()
        .map(|y| {
            let ry = y * radius;
            terms.iter().map(|d| ry.dot(d).max(0.0)).sum()
        })
        .collect();
    SphericalSignal::from_values(grid.bandwidth(), 1, values)
}

/// Direct evaluation of the response at an arbitrary unit direction, per channel.
pub fn respond_at(cloud: &PointCloud, center: usize, config: &ResponseConfig, dir: &Point) -> Result<Vec<f64>> {
    if center >= cloud.len() {
        return Err(Error::Size(format!("center {center} out of range for {} points", cloud.len())));
    }
    config.validate(cloud)?;
    let ry = dir * config.radius;
    let mut out = vec![0.0; config.channels()];
    for (d, c) in contributors(cloud, center, config) {
        let v = ry.dot(&d);
        if v > 0.0 {
            out[c] += v;
        }
    }
    Ok(out)
}

/// Largest grid response of every point, over directions and channels.
pub fn response_scores(cloud: &PointCloud, config: &ResponseConfig, grid: &SphereGrid) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(Error::Empty("cannot score an empty cloud".into()));
    }
    config.validate(cloud)?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| respond(cloud, i, config, grid).map(|s| s.max_value().max(0.0)))
        .collect()
}

/// Maximum of the unpartitioned response over the whole sphere, not just the grid.
///
/// The response `Σ max(0, yᵀd_k)` is convex and positively homogeneous in `y`, so its
/// maximum over unit vectors is `max_T ‖Σ_{k∈T} d_k‖`. Ascent by
/// `y ← normalize(Σ_{yᵀd_k > 0} d_k)` never decreases it and stops at a fixed point; it
/// is started from every grid direction and the best fixed point is kept. The result
/// depends on the point set alone, so rigid motions leave it unchanged up to rounding
/// unless the grid misses the basin of the global maximum.
pub fn refined_response_scores(cloud: &PointCloud, config: &ResponseConfig, grid: &SphereGrid) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(Error::Empty("cannot score an empty cloud".into()));
    }
    let flat = ResponseConfig {
        use_normals: false,
        partitions: 1,
        ..*config
    };
    flat.validate(cloud)?;
    (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let terms: Vec<Point> = contributors(cloud, i, &flat).into_iter().map(|(d, _)| d).collect();
            let mut best = 0.0f64;
            for y0 in grid.directions() {
                best = best.max(ascend(&terms, *y0));
            }
            Ok(config.radius * best)
        })
        .collect()
}

/// Fixed-point ascent from `y`; returns `‖Σ_T d‖` for the final active set `T`.
fn ascend(terms: &[Point], mut y: Point) -> f64 {
    let mut value = 0.0;
    for _ in 0..64 {
        let s: Point = terms.iter().filter(|d| y.dot(d) > 0.0).sum();
        let norm = s.norm();
        if norm <= value * (1.0 + 1e-15) || norm == 0.0 {
            return value.max(norm);
        }
        value = norm;
        y = s / norm;
    }
    value
}
