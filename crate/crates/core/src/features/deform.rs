use rand::Rng;

use super::linear::Linear;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

/// Displacement field `x ↦ scale · tanh-net(x)`; every layer is followed by `tanh`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformParams {
    pub layers: Vec<Linear>,
    pub scale: f64,
}

impl DeformParams {
    pub fn random<R: Rng + ?Sized>(hidden: &[usize], scale: f64, rng: &mut R) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::Config(format!("deformation scale must be nonnegative, got {scale}")));
        }
        let mut sizes = vec![3];
        sizes.extend_from_slice(hidden);
        sizes.push(3);
        let layers = sizes
            .windows(2)
            .map(|w| Linear::random(w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers, scale })
    }

    pub fn displacement(&self, x: &Point) -> Point {
        let mut h = vec![x.x, x.y, x.z];
        for layer in &self.layers {
            h = layer.forward(&h).into_iter().map(f64::tanh).collect();
        }
        Point::new(h[0], h[1], h[2]) * self.scale
    }
}

/// Moves every point by the displacement field; normals and labels are kept as they are.
pub fn deform(cloud: &PointCloud, params: &DeformParams) -> Result<PointCloud> {
    let points = cloud.points().iter().map(|x| x + params.displacement(x)).collect();
    cloud.with_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<[f64; 3]> = (0..200)
            .map(|_| [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0])
            .collect();
        PointCloud::from_coords(&c).unwrap()
    }

    #[test]
    fn zero_scale_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = DeformParams::random(&[8], 0.0, &mut rng).unwrap();
        let c = cloud(2);
        assert_eq!(deform(&c, &p).unwrap().points(), c.points());
    }

    #[test]
    fn zero_final_layer_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = DeformParams::random(&[8, 8], 0.3, &mut rng).unwrap();
        *p.layers.last_mut().unwrap() = Linear::zeros(8, 3);
        let c = cloud(4);
        assert_eq!(deform(&c, &p).unwrap().points(), c.points());
    }

    #[test]
    fn displacement_is_bounded() {
        let eps = 0.05;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = DeformParams::random(&[16], eps, &mut rng).unwrap();
            let c = cloud(seed + 100);
            let moved = deform(&c, &p).unwrap();
            for (a, b) in c.points().iter().zip(moved.points()) {
                assert!((a - b).norm() <= eps * 3f64.sqrt() + 1e-15);
            }
        }
    }

    #[test]
    fn negative_scale_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(DeformParams::random(&[4], -1.0, &mut rng).is_err());
    }
}
