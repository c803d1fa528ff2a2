use std::fmt::Write;

use crate::error::{Error, Result};
use crate::geometry::{knn_points, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureRole {
    Local,
    Global,
    Combined,
}

/// Row-major `rows × dim` per-point features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    dim: usize,
    data: Vec<f64>,
    role: FeatureRole,
}

impl FeatureField {
    pub fn new(dim: usize, data: Vec<f64>, role: FeatureRole) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values do not form rows of width {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature values must be finite".into()));
        }
        Ok(Self { dim, data, role })
    }

    pub fn from_rows(rows: &[Vec<f64>], role: FeatureRole) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::Empty("no feature rows".into()))?;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("feature rows have different widths".into()));
        }
        Self::new(dim, rows.concat(), role)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn role(&self) -> FeatureRole {
        self.role
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// One line per row: index, then the values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.rows().enumerate() {
            write!(out, "{i}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Normalized inverse-square-distance weights from each cloud point to its `k` nearest
/// subset points.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolator {
    subset_len: usize,
    weights: Vec<Vec<(usize, f64)>>,
}

impl Interpolator {
    pub fn new(cloud: &PointCloud, subset: &[usize], k: usize) -> Result<Self> {
        if k > subset.len() {
            return Err(Error::Size(format!("k = {k} exceeds subset size {}", subset.len())));
        }
        if k == 0 {
            return Err(Error::Size("k must be positive".into()));
        }
        let pts: Vec<_> = subset.iter().map(|&i| *cloud.point(i)).collect();
        let snap = 1e-9 * cloud.diameter();
        let weights = cloud
            .points()
            .iter()
            .map(|x| {
                let near = knn_points(&pts, x, k)?;
                let d0 = (pts[near[0]] - x).norm();
                if d0 <= snap {
                    return Ok(vec![(near[0], 1.0)]);
                }
                let raw: Vec<(usize, f64)> = near.iter().map(|&j| (j, 1.0 / (pts[j] - x).norm_squared())).collect();
                let total: f64 = raw.iter().map(|(_, w)| w).sum();
                Ok(raw.into_iter().map(|(j, w)| (j, w / total)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            subset_len: subset.len(),
            weights,
        })
    }

    pub fn weights(&self) -> &[Vec<(usize, f64)>] {
        &self.weights
    }

    pub fn apply(&self, on_subset: &FeatureField) -> Result<FeatureField> {
        if on_subset.len() != self.subset_len {
            return Err(Error::Shape(format!(
                "{} feature rows for a subset of {}",
                on_subset.len(),
                self.subset_len
            )));
        }
        let d = on_subset.dim();
        let mut data = vec![0.0; self.weights.len() * d];
        for (i, ws) in self.weights.iter().enumerate() {
            let out = &mut data[i * d..(i + 1) * d];
            for &(j, w) in ws {
                out.iter_mut().zip(on_subset.row(j)).for_each(|(o, v)| *o += w * v);
            }
        }
        FeatureField::new(d, data, FeatureRole::Local)
    }

    /// Adjoint of [`Interpolator::apply`] on flat row-major gradients.
    pub fn transpose(&self, grad: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.subset_len * dim];
        for (i, ws) in self.weights.iter().enumerate() {
            let g = &grad[i * dim..(i + 1) * dim];
            for &(j, w) in ws {
                out[j * dim..(j + 1) * dim].iter_mut().zip(g).for_each(|(o, v)| *o += w * v);
            }
        }
        out
    }
}

/// Local features on the subset carried to every cloud point.
pub fn interpolate(local_on_subset: &FeatureField, cloud: &PointCloud, subset: &[usize], k: usize) -> Result<FeatureField> {
    Interpolator::new(cloud, subset, k)?.apply(local_on_subset)
}
