use std::fmt::Write as _;

use super::PointCloud;
use crate::error::{Error, Result};

/// All-pairs geodesic distances over the epsilon-neighborhood graph.
///
/// Unreachable pairs hold `f64::INFINITY`; in text form they are written as `inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicAffinity {
    n: usize,
    epsilon: f64,
    distances: Vec<f64>,
}

impl GeodesicAffinity {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.distances[i * self.n..(i + 1) * self.n]
    }

    /// Whitespace-separated matrix, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self
                .row(i)
                .iter()
                .map(|d| if d.is_finite() { format!("{d}") } else { "inf".into() })
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str, epsilon: f64) -> Result<Self> {
        let mut distances = Vec::new();
        let mut n = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "inf" => Ok(f64::INFINITY),
                    _ => tok
                        .parse::<f64>()
                        .map_err(|e| Error::parse(lineno + 1, format!("bad distance {tok:?}: {e}"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            match n {
                None => n = Some(row.len()),
                Some(k) if k != row.len() => {
                    return Err(Error::parse(lineno + 1, "ragged affinity row"));
                }
                _ => {}
            }
            distances.extend(row);
        }
        let n = n.unwrap_or(0);
        if distances.len() != n * n {
            return Err(Error::Shape("affinity matrix is not square".into()));
        }
        Ok(Self {
            n,
            epsilon,
            distances,
        })
    }
}

/// Builds the symmetric epsilon-graph (edge iff distance ≤ epsilon, weight = distance)
/// and runs Floyd–Warshall.
pub fn geodesic_affinity(cloud: &PointCloud, epsilon: f64) -> Result<GeodesicAffinity> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = cloud.len();
    let pts = cloud.points();
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
        for j in i + 1..n {
            let dist = (pts[i] - pts[j]).norm();
            if dist <= epsilon {
                d[i * n + j] = dist;
                d[j * n + i] = dist;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let through = dik + d[k * n + j];
                if through < d[i * n + j] {
                    d[i * n + j] = through;
                }
            }
        }
    }
    Ok(GeodesicAffinity {
        n,
        epsilon,
        distances: d,
    })
}

/// Median distance from each point to its nearest other point.
pub fn median_nn_spacing(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return Err(Error::Size("nearest-neighbor spacing needs at least two points".into()));
    }
    let pts = cloud.points();
    let mut nn: Vec<f64> = (0..pts.len())
        .map(|i| {
            pts.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (pts[i] - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    Ok(if m % 2 == 1 {
        nn[m / 2]
    } else {
        0.5 * (nn[m / 2 - 1] + nn[m / 2])
    })
}
