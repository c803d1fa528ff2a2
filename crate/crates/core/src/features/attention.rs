use rand::Rng;

use super::affine::AffineCoords;
use super::field::{FeatureField, FeatureRole};
use super::linear::Linear;
use crate::error::{Error, Result};
use crate::geometry::{knn, PointCloud};

/// Gate between local and global features: a shared per-neighbor linear map averaged
/// over the `k` nearest points, then an affine layer to two logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub neighbor: Linear,
    pub head: Linear,
    pub k: usize,
}

/// Per-point values recorded by [`Attention::forward`].
#[derive(Clone, Debug)]
pub struct AttentionTape {
    neighbors: Vec<Vec<usize>>,
    means: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    probs: Vec<[f64; 2]>,
    local: FeatureField,
    global: Vec<Vec<f64>>,
}

impl AttentionTape {
    pub fn probs(&self) -> &[[f64; 2]] {
        &self.probs
    }
}

pub fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let (a, b) = ((logits[0] - m).exp(), (logits[1] - m).exp());
    let s = a + b;
    [a / s, b / s]
}

impl Attention {
    pub fn random<R: Rng + ?Sized>(local_dim: usize, hidden: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("attention neighborhood must be positive".into()));
        }
        Ok(Self {
            neighbor: Linear::random(local_dim, hidden, rng)?,
            head: Linear::random(hidden, 2, rng)?,
            k,
        })
    }

    pub fn param_count(&self) -> usize {
        self.neighbor.param_count() + self.head.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        [self.neighbor.params(), self.head.params()].concat()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!("{} values for {} attention parameters", values.len(), self.param_count())));
        }
        let (a, b) = values.split_at(self.neighbor.param_count());
        self.neighbor.set_params(a)?;
        self.head.set_params(b)
    }

    pub fn forward(
        &self,
        local: &FeatureField,
        global: &AffineCoords,
        cloud: &PointCloud,
    ) -> Result<(FeatureField, AttentionTape)> {
        let n = cloud.len();
        if local.len() != n || global.coords.len() != n {
            return Err(Error::Shape(format!(
                "{} local rows and {} global rows for {n} points",
                local.len(),
                global.coords.len()
            )));
        }
        if local.dim() != self.neighbor.inputs() {
            return Err(Error::Shape(format!(
                "local features have width {}, attention expects {}",
                local.dim(),
                self.neighbor.inputs()
            )));
        }
        let k = self.k.min(n);
        let d = local.dim();
        let s = global.dim();
        let mut tape = AttentionTape {
            neighbors: Vec::with_capacity(n),
            means: Vec::with_capacity(n),
            hidden: Vec::with_capacity(n),
            probs: Vec::with_capacity(n),
            local: local.clone(),
            global: global.coords.clone(),
        };
        let mut data = Vec::with_capacity(n * (d + s));
        for i in 0..n {
            let near = knn(cloud, cloud.point(i), k)?;
            let mut mean = vec![0.0; d];
            for &j in &near {
                mean.iter_mut().zip(local.row(j)).for_each(|(m, v)| *m += v / k as f64);
            }
            let hidden = self.neighbor.forward(&mean);
            let p = softmax2(&self.head.forward(&hidden));
            data.extend(local.row(i).iter().map(|v| p[0] * v));
            data.extend(global.coords[i].iter().map(|v| p[1] * v));
            tape.neighbors.push(near);
            tape.means.push(mean);
            tape.hidden.push(hidden);
            tape.probs.push(p);
        }
        Ok((FeatureField::new(d + s, data, FeatureRole::Combined)?, tape))
    }

    /// Gradient of the local features and of [`Attention::params`].
    pub fn backward(&self, tape: &AttentionTape, grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = tape.local.dim();
        let n = tape.probs.len();
        let s = tape.global.first().map_or(0, Vec::len);
        if grad.len() != n * (d + s) {
            return Err(Error::Shape(format!("gradient has {} values, expected {}", grad.len(), n * (d + s))));
        }
        let mut g_local = vec![0.0; n * d];
        let mut g_params = vec![0.0; self.param_count()];
        let split = self.neighbor.param_count();
        let (g_neighbor, g_head) = g_params.split_at_mut(split);
        for i in 0..n {
            let row = &grad[i * (d + s)..(i + 1) * (d + s)];
            let p = tape.probs[i];
            let phi = tape.local.row(i);
            let gp = [
                row[..d].iter().zip(phi).map(|(a, b)| a * b).sum::<f64>(),
                row[d..].iter().zip(&tape.global[i]).map(|(a, b)| a * b).sum::<f64>(),
            ];
            g_local[i * d..(i + 1) * d]
                .iter_mut()
                .zip(&row[..d])
                .for_each(|(o, g)| *o += p[0] * g);
            let dotp = p[0] * gp[0] + p[1] * gp[1];
            let g_logits = [p[0] * (gp[0] - dotp), p[1] * (gp[1] - dotp)];
            let g_hidden = self.head.backward(&tape.hidden[i], &g_logits, g_head);
            let g_mean = self.neighbor.backward(&tape.means[i], &g_hidden, g_neighbor);
            let k = tape.neighbors[i].len() as f64;
            for &j in &tape.neighbors[i] {
                g_local[j * d..(j + 1) * d]
                    .iter_mut()
                    .zip(&g_mean)
                    .for_each(|(o, g)| *o += g / k);
            }
        }
        Ok((g_local, g_params))
    }
}

/// Rows `(p_l Φ^l(x), p_g Φ^g(x))` and the per-point gate probabilities `(p_l, p_g)`.
pub fn attention_combine(
    local: &FeatureField,
    global: &AffineCoords,
    cloud: &PointCloud,
    attention: &Attention,
) -> Result<(FeatureField, Vec<[f64; 2]>)> {
    let (out, tape) = attention.forward(local, global, cloud)?;
    Ok((out, tape.probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::affine_coords;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (PointCloud, AffineCoords, FeatureField, Attention) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<[f64; 3]> = (0..15).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let cloud = PointCloud::from_coords(&coords).unwrap();
        let global = affine_coords(&cloud, &[0, 1, 2, 3, 4]).unwrap();
        let local = FeatureField::new(3, (0..45).map(|_| rng.random::<f64>() - 0.5).collect(), FeatureRole::Local).unwrap();
        let attn = Attention::random(3, 4, 4, &mut rng).unwrap();
        (cloud, global, local, attn)
    }

    #[test]
    fn equal_logits_give_even_gates() {
        let (cloud, global, local, mut attn) = setup(1);
        attn.head = Linear::zeros(4, 2);
        let (out, probs) = attention_combine(&local, &global, &cloud, &attn).unwrap();
        assert!(probs.iter().all(|p| p[0] == 0.5 && p[1] == 0.5));
        assert_eq!(out.dim(), 3 + 5);
    }

    #[test]
    fn saturated_local_gate_passes_local_features() {
        let (cloud, global, local, mut attn) = setup(2);
        attn.head = Linear::from_parts(4, 2, vec![0.0; 8], vec![100.0, -100.0]).unwrap();
        let (out, _) = attention_combine(&local, &global, &cloud, &attn).unwrap();
        for i in 0..cloud.len() {
            for (a, b) in out.row(i)[..3].iter().zip(local.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(out.row(i)[3..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn matches_composition_oracle() {
        let (cloud, global, local, attn) = setup(3);
        let (out, probs) = attention_combine(&local, &global, &cloud, &attn).unwrap();
        for i in 0..cloud.len() {
            assert!((probs[i][0] + probs[i][1] - 1.0).abs() < 1e-12);
            let mut dists: Vec<(f64, usize)> =
                (0..cloud.len()).map(|j| ((cloud.point(j) - cloud.point(i)).norm(), j)).collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // Mean of the per-neighbor maps.
            let mut z = vec![0.0; 4];
            for &(_, j) in &dists[..4] {
                for (zz, v) in z.iter_mut().zip(attn.neighbor.forward(local.row(j))) {
                    *zz += v / 4.0;
                }
            }
            let logits = attn.head.forward(&z);
            let pl = 1.0 / (1.0 + (logits[1] - logits[0]).exp());
            assert!((probs[i][0] - pl).abs() < 1e-12);
            assert!((out.row(i)[0] - pl * local.row(i)[0]).abs() < 1e-12);
            assert!((out.row(i)[3] - (1.0 - pl) * global.coords[i][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (cloud, global, local, attn) = setup(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let probe: Vec<f64> = (0..15 * 8).map(|_| rng.random::<f64>() - 0.5).collect();
        let loss = |attn: &Attention, local: &FeatureField| -> f64 {
            let (out, _) = attention_combine(local, &global, &cloud, attn).unwrap();
            out.data().iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (_, tape) = attn.forward(&local, &global, &cloud).unwrap();
        let (gl, gp) = attn.backward(&tape, &probe).unwrap();
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        for i in 0..local.data().len() {
            let mut p = local.data().to_vec();
            p[i] += h;
            let mut m = local.data().to_vec();
            m[i] -= h;
            let fp = FeatureField::new(3, p, FeatureRole::Local).unwrap();
            let fm = FeatureField::new(3, m, FeatureRole::Local).unwrap();
            let fd = (loss(&attn, &fp) - loss(&attn, &fm)) / (2.0 * h);
            assert!(rel(fd, gl[i]) < 1e-4, "local {i}: {fd} vs {}", gl[i]);
        }
        let base = attn.params();
        for j in 0..base.len() {
            let mut a = attn.clone();
            let mut v = base.clone();
            v[j] += h;
            a.set_params(&v).unwrap();
            let mut b = attn.clone();
            v[j] -= 2.0 * h;
            b.set_params(&v).unwrap();
            let fd = (loss(&a, &local) - loss(&b, &local)) / (2.0 * h);
            assert!(rel(fd, gp[j]) < 1e-4, "param {j}: {fd} vs {}", gp[j]);
        }
    }

    #[test]
    fn row_count_mismatch_is_a_shape_error() {
        let (cloud, global, _, attn) = setup(6);
        let short = FeatureField::new(3, vec![0.0; 9], FeatureRole::Local).unwrap();
        assert!(matches!(attn.forward(&short, &global, &cloud), Err(Error::Shape(_))));
    }
}
