//! Synthetic point-cloud datasets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{Point, PointCloud};

/// A cloud with an optional class label; part labels live on the cloud.
#[derive(Clone, Debug)]
pub struct Sample {
    pub cloud: PointCloud,
    pub label: Option<usize>,
}

fn unit<R: Rng + ?Sized>(rng: &mut R) -> Point {
    loop {
        let v = Point::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniform samples on the surface of the cube `[-1, 1]³`.
pub fn cube_surface<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let face = rng.random_range(0..6);
            let (u, v) = (rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            let s = if face % 2 == 0 { 1.0 } else { -1.0 };
            match face / 2 {
                0 => Point::new(s, u, v),
                1 => Point::new(u, s, v),
                _ => Point::new(u, v, s),
            }
        })
        .collect();
    PointCloud::new(points).expect("finite points")
}

/// Uniform samples on the unit sphere.
pub fn sphere_surface<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PointCloud {
    PointCloud::new((0..n).map(|_| unit(rng)).collect()).expect("finite points")
}

/// `n` clouds alternating between cube (label 0) and sphere (label 1) surfaces.
pub fn cube_sphere_dataset<R: Rng + ?Sized>(n: usize, points: usize, rng: &mut R) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let label = i % 2;
            let cloud = if label == 0 {
                cube_surface(points, rng)
            } else {
                sphere_surface(points, rng)
            };
            Sample {
                cloud,
                label: Some(label),
            }
        })
        .collect()
}

/// Two spheres of different radii joined by a thin bar along the x axis.
///
/// Part 0 is every point nearer the large sphere's center, part 1 the rest.
pub fn barbell<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PointCloud {
    let r_big = 1.0 + 0.1 * (rng.random::<f64>() - 0.5);
    let r_small = 0.6 + 0.1 * (rng.random::<f64>() - 0.5);
    let gap = 1.2 + 0.2 * rng.random::<f64>();
    let c_big = Point::new(-(r_big + gap / 2.0), 0.0, 0.0);
    let c_small = Point::new(r_small + gap / 2.0, 0.0, 0.0);
    let bar_radius = 0.12;
    let n_big = n * 11 / 20;
    let n_small = n * 5 / 20;
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i < n_big {
            c_big + unit(rng) * r_big
        } else if i < n_big + n_small {
            c_small + unit(rng) * r_small
        } else {
            let t = rng.random::<f64>();
            let x = c_big.x + r_big + t * (c_small.x - r_small - c_big.x - r_big);
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            Point::new(x, bar_radius * a.cos(), bar_radius * a.sin())
        };
        points.push(p);
    }
    let labels = points
        .iter()
        .map(|p| usize::from((p - c_small).norm() < (p - c_big).norm()))
        .collect();
    PointCloud::with_attributes(points, None, Some(labels)).expect("consistent attributes")
}

pub fn barbell_dataset<R: Rng + ?Sized>(n: usize, points: usize, rng: &mut R) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            cloud: barbell(points, rng),
            label: None,
        })
        .collect()
}
