//! Point clouds, rotations and the metric queries the rest of the crate builds on.

mod affinity;
mod hull;
pub mod io;

pub use affinity::{geodesic_affinity, median_nn_spacing, GeodesicAffinity};
pub use hull::{affine_dimension, hull_test, is_hull_vertex, HullTest};

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

const NORMAL_TOL: f64 = 1e-9;
const ROTATION_TOL: f64 = 1e-12;

/// An ordered set of 3D points with optional unit normals and part labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    normals: Option<Vec<Point>>,
    labels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        Self::with_attributes(points, None, None)
    }

    pub fn with_attributes(
        points: Vec<Point>,
        normals: Option<Vec<Point>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Numerical(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::Shape(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if let Some(i) = n.iter().position(|v| (v.norm() - 1.0).abs() > NORMAL_TOL) {
                return Err(Error::Numerical(format!("normal {i} is not unit length")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::Shape(format!(
                    "{} labels for {} points",
                    l.len(),
                    points.len()
                )));
            }
        }
        Ok(Self {
            points,
            normals,
            labels,
        })
    }

    pub fn from_coords(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point::new(c[0], c[1], c[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn normals(&self) -> Option<&[Point]> {
        self.normals.as_deref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn mean(&self) -> Result<Point> {
        if self.is_empty() {
            return Err(Error::Empty("mean of an empty cloud".into()));
        }
        let sum = self.points.iter().fold(Point::zeros(), |acc, p| acc + p);
        Ok(sum / self.len() as f64)
    }

    /// Largest pairwise Euclidean distance (zero for fewer than two points).
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max((a - b).norm_squared());
            }
        }
        best.sqrt()
    }

    /// Applies `x -> R x + t`; normals are rotated, labels kept.
    pub fn transformed(&self, rotation: &Rotation, translation: &Point) -> Self {
        let r = rotation.matrix();
        Self {
            points: self.points.iter().map(|p| r * p + translation).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| (r * n).normalize()).collect()),
            labels: self.labels.clone(),
        }
    }

    pub fn rotated(&self, rotation: &Rotation) -> Self {
        self.transformed(rotation, &Point::zeros())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|ls| indices.iter().map(|&i| ls[i]).collect()),
        }
    }

    /// Reorders the cloud so that entry `i` of the result is entry `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        self.subset(perm)
    }

    /// Replaces point coordinates, keeping normals and labels.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Self> {
        Self::with_attributes(points, self.normals.clone(), self.labels.clone())
    }
}

/// A proper rotation of R³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > ROTATION_TOL || (m.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Numerical(format!(
                "matrix is not a rotation (orthogonality defect {err:.3e})"
            )));
        }
        Ok(Self(m))
    }

    /// `R = Rz(alpha) Ry(beta) Rz(gamma)`, the ZYZ convention used everywhere in the crate.
    pub fn from_euler_zyz(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self(rot_z(alpha) * rot_y(beta) * rot_z(gamma))
    }

    /// Inverse of [`Rotation::from_euler_zyz`]; `beta` lies in `[0, pi]`.
    pub fn to_euler_zyz(&self) -> (f64, f64, f64) {
        let m = &self.0;
        let sin_beta = m[(2, 0)].hypot(m[(2, 1)]);
        let beta = sin_beta.atan2(m[(2, 2)]);
        if sin_beta < 1e-9 {
            // Gimbal lock: only alpha ± gamma is determined.
            let alpha = m[(1, 0)].atan2(m[(0, 0)]);
            if m[(2, 2)] > 0.0 {
                (alpha, 0.0, 0.0)
            } else {
                (-m[(0, 1)].atan2(-m[(0, 0)]), std::f64::consts::PI, 0.0)
            }
        } else {
            let alpha = m[(1, 2)].atan2(m[(0, 2)]);
            let gamma = m[(2, 1)].atan2(-m[(2, 0)]);
            (alpha, beta, gamma)
        }
    }

    /// Haar-uniform rotation from a seed (uniform unit quaternion).
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(&mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // Shoemake's subgroup algorithm.
        let u1: f64 = rng.random();
        let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let q = Vector4::new(a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]));
        Self(*uq.to_rotation_matrix().matrix())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, p: &Point) -> Point {
        self.0 * p
    }
}

pub(crate) fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub(crate) fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Indices of the `k` points of `points` nearest to `query`, nearest first, ties by index.
pub fn knn_points(points: &[Point], query: &Point, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Size("k must be positive".into()));
    }
    if k > points.len() {
        return Err(Error::Size(format!(
            "k = {k} exceeds point count {}",
            points.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - query).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(k).map(|(_, i)| i).collect())
}

pub fn knn(cloud: &PointCloud, query: &Point, k: usize) -> Result<Vec<usize>> {
    knn_points(cloud.points(), query, k)
}

/// Index of the cloud point nearest to the arithmetic mean (lowest index on ties).
pub fn centroid(cloud: &PointCloud) -> Result<usize> {
    let mean = cloud
        .mean()
        .map_err(|_| Error::Empty("centroid of an empty cloud".into()))?;
    let mut best = (f64::INFINITY, 0usize);
    for (i, p) in cloud.points().iter().enumerate() {
        let d = (p - mean).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}
