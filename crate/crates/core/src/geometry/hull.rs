//! Convex-hull vertex membership by linear feasibility.
//!
//! A point is a hull vertex iff some direction strictly separates it from every other
//! point. By LP duality this fails exactly when the point is a convex combination of
//! the others, which is the phase-one feasibility problem solved here.

use nalgebra::{DMatrix, DVector};

use super::{Point, PointCloud};
use crate::error::{Error, Result};

const SINGULAR_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;
const FEASIBLE_TOL: f64 = 1e-9;

/// Outcome of a hull-membership query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HullTest {
    pub vertex: bool,
    /// Affine dimension of the cloud (3 for non-degenerate input).
    pub dimension: usize,
}

impl HullTest {
    pub fn degenerate(&self) -> bool {
        self.dimension < 3
    }
}

/// Affine dimension of the cloud and an orthonormal basis of its span (rows of the
/// returned matrix), using singular values of the centered coordinates.
fn spanning_frame(cloud: &PointCloud) -> (usize, Point, DMatrix<f64>) {
    let mean = cloud.mean().unwrap_or_else(|_| Point::zeros());
    let n = cloud.len();
    let centered = DMatrix::from_fn(n, 3, |i, j| cloud.point(i)[j] - mean[j]);
    let diameter = cloud.diameter();
    if n < 2 || diameter == 0.0 {
        return (0, mean, DMatrix::zeros(0, 3));
    }
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let rank = order
        .iter()
        .filter(|&&k| svd.singular_values[k] > SINGULAR_TOL * diameter)
        .count();
    let basis = DMatrix::from_fn(rank, 3, |r, c| v_t[(order[r], c)]);
    (rank, mean, basis)
}

pub fn affine_dimension(cloud: &PointCloud) -> usize {
    spanning_frame(cloud).0
}

/// Full hull-membership query, reporting the detected dimension.
pub fn hull_test(cloud: &PointCloud, index: usize) -> Result<HullTest> {
    let n = cloud.len();
    if index >= n {
        return Err(Error::Size(format!("index {index} out of range for {n} points")));
    }
    let (dimension, mean, basis) = spanning_frame(cloud);
    if dimension == 0 {
        return Ok(HullTest {
            vertex: n == 1,
            dimension,
        });
    }
    let scale = cloud.diameter();
    // Coordinates in the spanning frame, scaled to unit diameter.
    let coords: Vec<Vec<f64>> = cloud
        .points()
        .iter()
        .map(|p| {
            let c = p - mean;
            (0..dimension)
                .map(|r| (basis[(r, 0)] * c.x + basis[(r, 1)] * c.y + basis[(r, 2)] * c.z) / scale)
                .collect()
        })
        .collect();
    let vertex = if dimension == 1 {
        let t = coords[index][0];
        let others = coords
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != index)
            .map(|(_, c)| c[0]);
        let (lo, hi) = others.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        t < lo - FEASIBLE_TOL || t > hi + FEASIBLE_TOL
    } else {
        !in_convex_hull_of_others(&coords, index)
    };
    if dimension < 3 {
        log::debug!("hull test on a degenerate cloud (dimension {dimension})");
    }
    Ok(HullTest { vertex, dimension })
}

pub fn is_hull_vertex(cloud: &PointCloud, index: usize) -> Result<bool> {
    hull_test(cloud, index).map(|t| t.vertex)
}

/// Whether `coords[index]` is a convex combination of the remaining points.
fn in_convex_hull_of_others(coords: &[Vec<f64>], index: usize) -> bool {
    let dim = coords[index].len();
    let others: Vec<&Vec<f64>> = coords
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != index)
        .map(|(_, c)| c)
        .collect();
    if others.is_empty() {
        return false;
    }
    let m = dim + 1;
    let n = others.len();
    let mut a = DMatrix::from_fn(m, n, |r, c| if r < dim { others[c][r] } else { 1.0 });
    let mut b = DVector::from_fn(m, |r, _| if r < dim { coords[index][r] } else { 1.0 });
    for r in 0..m {
        if b[r] < 0.0 {
            b[r] = -b[r];
            for c in 0..n {
                a[(r, c)] = -a[(r, c)];
            }
        }
    }
    phase_one_residual(&a, &b) <= FEASIBLE_TOL
}

/// Minimum of the sum of artificial variables for `A x + s = b`, `x, s >= 0`, `b >= 0`.
/// Dense tableau simplex with Bland's rule.
fn phase_one_residual(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    let cols = n + m;
    let mut t = DMatrix::<f64>::zeros(m, cols);
    for r in 0..m {
        for c in 0..n {
            t[(r, c)] = a[(r, c)];
        }
        t[(r, n + r)] = 1.0;
    }
    let mut rhs = b.clone();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let cost = |j: usize| if j >= n { 1.0 } else { 0.0 };

    for _ in 0..(50 * cols).max(1000) {
        // Reduced costs d_j = c_j - c_B^T T_j.
        let entering = (0..cols).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let d = cost(j) - (0..m).map(|r| cost(basis[r]) * t[(r, j)]).sum::<f64>();
            d < -PIVOT_TOL
        });
        let Some(e) = entering else { break };
        let mut leave: Option<(f64, usize, usize)> = None;
        for r in 0..m {
            if t[(r, e)] > PIVOT_TOL {
                let ratio = rhs[r] / t[(r, e)];
                let better = match leave {
                    None => true,
                    Some((best, _, bidx)) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[r] < bidx)
                    }
                };
                if better {
                    leave = Some((ratio, r, basis[r]));
                }
            }
        }
        let Some((_, pr, _)) = leave else { break };
        let piv = t[(pr, e)];
        for c in 0..cols {
            t[(pr, c)] /= piv;
        }
        rhs[pr] /= piv;
        for r in 0..m {
            if r != pr {
                let f = t[(r, e)];
                if f != 0.0 {
                    for c in 0..cols {
                        t[(r, c)] -= f * t[(pr, c)];
                    }
                    rhs[r] -= f * rhs[pr];
                }
            }
        }
        basis[pr] = e;
    }
    (0..m).filter(|&r| basis[r] >= n).map(|r| rhs[r].max(0.0)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_corners() -> Vec<[f64; 3]> {
        let mut v = vec![];
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    /// Exhaustive facet-plane oracle: in general position a point is a hull vertex iff it
    /// lies on a plane through three cloud points with every other point strictly on one side.
    fn brute_force_vertices(cloud: &PointCloud) -> Vec<bool> {
        let p = cloud.points();
        let n = p.len();
        let mut vertex = vec![false; n];
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let normal = (p[j] - p[i]).cross(&(p[k] - p[i]));
                    if normal.norm() < 1e-12 {
                        continue;
                    }
                    let mut pos = false;
                    let mut neg = false;
                    for (l, q) in p.iter().enumerate() {
                        if l == i || l == j || l == k {
                            continue;
                        }
                        let s = normal.dot(&(q - p[i]));
                        pos |= s > 0.0;
                        neg |= s < 0.0;
                    }
                    if !(pos && neg) {
                        vertex[i] = true;
                        vertex[j] = true;
                        vertex[k] = true;
                    }
                }
            }
        }
        vertex
    }

    #[test]
    fn cube_corners_are_vertices() {
        let cloud = PointCloud::from_coords(&cube_corners()).unwrap();
        for i in 0..8 {
            assert!(is_hull_vertex(&cloud, i).unwrap());
        }
    }

    #[test]
    fn interior_point_is_not_a_vertex() {
        let mut c = cube_corners();
        c.push([0.5, 0.5, 0.5]);
        let cloud = PointCloud::from_coords(&c).unwrap();
        assert!(!is_hull_vertex(&cloud, 8).unwrap());
        assert!(is_hull_vertex(&cloud, 0).unwrap());
    }

    #[test]
    fn edge_midpoint_and_duplicates_are_not_vertices() {
        let mut c = cube_corners();
        c.push([0.5, 0.0, 0.0]);
        c.push([1.0, 1.0, 1.0]);
        let cloud = PointCloud::from_coords(&c).unwrap();
        assert!(!is_hull_vertex(&cloud, 8).unwrap());
        assert!(!is_hull_vertex(&cloud, 9).unwrap());
        assert!(!is_hull_vertex(&cloud, 7).unwrap());
    }

    #[test]
    fn agrees_with_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let pts: Vec<[f64; 3]> = (0..40)
                .map(|_| [rng.random(), rng.random(), rng.random()])
                .collect();
            let cloud = PointCloud::from_coords(&pts).unwrap();
            let oracle = brute_force_vertices(&cloud);
            for i in 0..40 {
                assert_eq!(is_hull_vertex(&cloud, i).unwrap(), oracle[i], "point {i}");
            }
        }
    }

    #[test]
    fn coplanar_cloud_falls_back_to_planar_test() {
        let pts = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.5, 0.5, 0.0],
        ];
        let cloud = PointCloud::from_coords(&pts).unwrap();
        let t = hull_test(&cloud, 4).unwrap();
        assert!(t.degenerate());
        assert_eq!(t.dimension, 2);
        assert!(!t.vertex);
        assert!(hull_test(&cloud, 3).unwrap().vertex);
    }

    #[test]
    fn collinear_cloud_uses_endpoints() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5], [2.0, 2.0, 2.0]];
        let cloud = PointCloud::from_coords(&pts).unwrap();
        assert_eq!(affine_dimension(&cloud), 1);
        let v: Vec<bool> = (0..4).map(|i| is_hull_vertex(&cloud, i).unwrap()).collect();
        assert_eq!(v, vec![true, false, false, true]);
    }

    #[test]
    fn out_of_range_index() {
        let cloud = PointCloud::from_coords(&cube_corners()).unwrap();
        assert!(matches!(is_hull_vertex(&cloud, 8), Err(Error::Size(_))));
    }
}
