use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Affine coordinates of every cloud point with respect to a subset `S` of the cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCoords {
    /// Row `i` holds the coefficients of point `i`, one per subset point.
    pub coords: Vec<Vec<f64>>,
    pub hull_indices: Vec<usize>,
}

impl AffineCoords {
    pub fn dim(&self) -> usize {
        self.hull_indices.len()
    }
}

/// Minimum-norm solutions of `Σ_j c_j x_j = x_i`, `Σ_j c_j = 1` over the subset points.
///
/// The system is solved in coordinates centered at the subset mean and scaled by its
/// diameter, which leaves the solution set unchanged.
pub fn affine_coords(cloud: &PointCloud, subset: &[usize]) -> Result<AffineCoords> {
    if subset.is_empty() {
        return Err(Error::Empty("affine coordinates need a non-empty subset".into()));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::Size(format!("subset index {i} out of range for {} points", cloud.len())));
    }
    let s = subset.len();
    let pts: Vec<_> = subset.iter().map(|&i| *cloud.point(i)).collect();
    let center = pts.iter().sum::<nalgebra::Vector3<f64>>() / s as f64;
    let scale = cloud.diameter().max(f64::MIN_POSITIVE);
    let mut a = DMatrix::zeros(4, s);
    for (j, p) in pts.iter().enumerate() {
        let q = (p - center) / scale;
        a[(0, j)] = q.x;
        a[(1, j)] = q.y;
        a[(2, j)] = q.z;
        a[(3, j)] = 1.0;
    }
    let pinv = a
        .clone()
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut coords = Vec::with_capacity(cloud.len());
    for (index, p) in cloud.points().iter().enumerate() {
        let q = (p - center) / scale;
        let b = DVector::from_vec(vec![q.x, q.y, q.z, 1.0]);
        let c = &pinv * &b;
        let residual = (&a * &c - &b).norm() * scale;
        if residual > 1e-6 * scale {
            return Err(Error::Unrepresentable { index, residual });
        }
        coords.push(c.iter().copied().collect());
    }
    Ok(AffineCoords {
        coords,
        hull_indices: subset.to_vec(),
    })
}
