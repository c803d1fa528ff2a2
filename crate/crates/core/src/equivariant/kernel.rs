//! Real kernel tensors `W ∈ R^{C_in × N_1 × N_2 × C_out}` and their map to complex spectra.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor_ring::TensorRingKernel;
use crate::error::{Error, Result};
use crate::harmonic::{s2_coeff_count, s2_index, so3_coeff_count, so3_index};

/// Dense storage or a tensor ring over the four kernel modes.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelStorage {
    Dense(Vec<f64>),
    Ring(TensorRingKernel),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    shape: [usize; 4],
    storage: KernelStorage,
}

impl Kernel {
    /// Entries with variance `var`; `ring_rank = None` keeps a dense tensor.
    pub fn random<R: Rng + ?Sized>(shape: [usize; 4], ring_rank: Option<usize>, var: f64, rng: &mut R) -> Result<Self> {
        let storage = match ring_rank {
            Some(p) => KernelStorage::Ring(TensorRingKernel::random(shape.to_vec(), p, var, rng)?),
            None => {
                let normal = Normal::new(0.0, var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
                KernelStorage::Dense((0..shape.iter().product::<usize>()).map(|_| normal.sample(rng)).collect())
            }
        };
        Ok(Self { shape, storage })
    }

    pub fn from_storage(shape: [usize; 4], storage: KernelStorage) -> Result<Self> {
        match &storage {
            KernelStorage::Dense(v) if v.len() != shape.iter().product::<usize>() => {
                return Err(Error::Shape(format!("dense kernel has {} entries for shape {shape:?}", v.len())))
            }
            KernelStorage::Ring(t) if t.mode_sizes() != shape => {
                return Err(Error::Shape(format!("ring modes {:?} for shape {shape:?}", t.mode_sizes())))
            }
            _ => {}
        }
        Ok(Self { shape, storage })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn storage(&self) -> &KernelStorage {
        &self.storage
    }

    pub fn dense(&self) -> Vec<f64> {
        match &self.storage {
            KernelStorage::Dense(v) => v.clone(),
            KernelStorage::Ring(t) => t.materialize(),
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.storage {
            KernelStorage::Dense(v) => v.len(),
            KernelStorage::Ring(t) => t.param_count(),
        }
    }

    pub fn dense_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn params(&self) -> Vec<f64> {
        match &self.storage {
            KernelStorage::Dense(v) => v.clone(),
            KernelStorage::Ring(t) => t.params(),
        }
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        match &mut self.storage {
            KernelStorage::Dense(v) => {
                if values.len() != v.len() {
                    return Err(Error::Shape(format!("{} values for {} kernel entries", values.len(), v.len())));
                }
                v.copy_from_slice(values);
                Ok(())
            }
            KernelStorage::Ring(t) => t.set_params(values),
        }
    }

    /// Parameter gradient from the gradient of the dense tensor.
    pub fn param_grad(&self, grad_dense: &[f64]) -> Result<Vec<f64>> {
        match &self.storage {
            KernelStorage::Dense(_) => Ok(grad_dense.to_vec()),
            KernelStorage::Ring(t) => Ok(t.backward(grad_dense)?.concat()),
        }
    }
}

/// Unitary map from real parameters to conjugate-symmetric complex spectra.
///
/// Each conjugate pair `(k, k̄)` with `ŵ_k̄ = s conj(ŵ_k)` takes two reals `(a, b)`:
/// `ŵ_k = (a - ib)/√2`, `ŵ_k̄ = s (a + ib)/√2`. Self-conjugate entries are real.
#[derive(Clone, Debug)]
pub struct RealSpectralMap {
    len: usize,
    pairs: Vec<(usize, usize, f64)>,
    selfs: Vec<usize>,
}

impl RealSpectralMap {
    /// Spherical-harmonic coefficients: `ŵ(l,-m) = (-1)^m conj(ŵ(l,m))`.
    pub fn s2(bandwidth: usize) -> Self {
        let mut pairs = vec![];
        let mut selfs = vec![];
        for l in 0..bandwidth {
            selfs.push(s2_index(l, 0));
            for m in 1..=l as i64 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                pairs.push((s2_index(l, m), s2_index(l, -m), sign));
            }
        }
        Self {
            len: s2_coeff_count(bandwidth),
            pairs,
            selfs,
        }
    }

    /// SO(3) coefficients: `ŵ(l,-m,-n) = (-1)^{m+n} conj(ŵ(l,m,n))`.
    pub fn so3(bandwidth: usize) -> Self {
        let mut pairs = vec![];
        let mut selfs = vec![];
        for l in 0..bandwidth {
            let li = l as i64;
            selfs.push(so3_index(l, 0, 0));
            for m in -li..=li {
                for n in -li..=li {
                    if (m, n) > (0, 0) {
                        let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
                        pairs.push((so3_index(l, m, n), so3_index(l, -m, -n), sign));
                    }
                }
            }
        }
        Self {
            len: so3_coeff_count(bandwidth),
            pairs,
            selfs,
        }
    }

    /// Number of real parameters (equal to the number of complex coefficients).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn to_complex(&self, real: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        for &k in &self.selfs {
            out[k] = Complex64::new(real[k], 0.0);
        }
        for &(k, kb, s) in &self.pairs {
            let (a, b) = (real[k], real[kb]);
            out[k] = Complex64::new(a, -b) * FRAC_1_SQRT_2;
            out[kb] = Complex64::new(a, b) * (s * FRAC_1_SQRT_2);
        }
        out
    }

    /// Gradient of the real parameters given the complex gradient `∂L/∂Re + i ∂L/∂Im`.
    pub fn grad_real(&self, grad: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &k in &self.selfs {
            out[k] = grad[k].re;
        }
        for &(k, kb, s) in &self.pairs {
            out[k] = (grad[k].re + s * grad[kb].re) * FRAC_1_SQRT_2;
            out[kb] = (-grad[k].im + s * grad[kb].im) * FRAC_1_SQRT_2;
        }
        out
    }
}

/// Complex kernel spectra `[c_in][c_out][coefficient]` from a dense kernel whose middle
/// modes hold the real spectral parameters row-major (trailing entries are padding).
pub fn kernel_spectrum(dense: &[f64], shape: [usize; 4], map: &RealSpectralMap) -> Vec<Complex64> {
    let [c_in, n1, n2, c_out] = shape;
    let k = map.len();
    let mut out = Vec::with_capacity(c_in * c_out * k);
    let mut real = vec![0.0; k];
    for ci in 0..c_in {
        for co in 0..c_out {
            for (j, r) in real.iter_mut().enumerate() {
                *r = dense[((ci * n1 * n2) + j) * c_out + co];
            }
            out.extend(map.to_complex(&real));
        }
    }
    out
}

/// Adjoint of [`kernel_spectrum`].
pub fn kernel_spectrum_grad(grad: &[Complex64], shape: [usize; 4], map: &RealSpectralMap) -> Vec<f64> {
    let [c_in, n1, n2, c_out] = shape;
    let k = map.len();
    let mut out = vec![0.0; c_in * n1 * n2 * c_out];
    for ci in 0..c_in {
        for co in 0..c_out {
            let g = map.grad_real(&grad[(ci * c_out + co) * k..(ci * c_out + co + 1) * k]);
            for (j, v) in g.into_iter().enumerate() {
                out[((ci * n1 * n2) + j) * c_out + co] = v;
            }
        }
    }
    out
}

/// Middle kernel modes for the S² layer: `(B, B)`, exactly `B²` parameters.
pub fn s2_kernel_modes(bandwidth: usize) -> (usize, usize) {
    (bandwidth, bandwidth)
}

/// Middle kernel modes for the SO(3) layer: `(B, ⌈K/B⌉)` with `K = B(4B²-1)/3`.
pub fn so3_kernel_modes(bandwidth: usize) -> (usize, usize) {
    (bandwidth, so3_coeff_count(bandwidth).div_ceil(bandwidth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_map(map: &RealSpectralMap, conj_partner: impl Fn(usize) -> (usize, f64)) {
        let real: Vec<f64> = (0..map.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let z = map.to_complex(&real);
        for k in 0..map.len() {
            let (kb, s) = conj_partner(k);
            assert!((z[kb] - z[k].conj() * s).norm() < 1e-14);
        }
        // Unitary: energy preserved.
        let e_real: f64 = real.iter().map(|v| v * v).sum();
        let e_cplx: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        assert!((e_real - e_cplx).abs() < 1e-12);
        // Gradient is the adjoint: <grad_real(g), a> = Re <g, to_complex(a)>.
        let g: Vec<Complex64> = (0..map.len()).map(|i| Complex64::new((i as f64).cos(), (i as f64 * 0.5).sin())).collect();
        let lhs: f64 = map.grad_real(&g).iter().zip(&real).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.iter().zip(&z).map(|(a, b)| (a.conj() * b).re).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn s2_map_is_conjugate_symmetric_and_unitary() {
        let bw = 5;
        let map = RealSpectralMap::s2(bw);
        let mut partner = vec![(0, 1.0); map.len()];
        for l in 0..bw {
            for m in -(l as i64)..=l as i64 {
                let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                partner[s2_index(l, m)] = (s2_index(l, -m), s);
            }
        }
        check_map(&map, |k| partner[k]);
    }

    #[test]
    fn so3_map_is_conjugate_symmetric_and_unitary() {
        let bw = 4;
        let map = RealSpectralMap::so3(bw);
        let mut partner = vec![(0, 1.0); map.len()];
        for l in 0..bw {
            let li = l as i64;
            for m in -li..=li {
                for n in -li..=li {
                    let s = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
                    partner[so3_index(l, m, n)] = (so3_index(l, -m, -n), s);
                }
            }
        }
        check_map(&map, |k| partner[k]);
    }

    #[test]
    fn spectrum_gradient_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bw = 3;
        let (n1, n2) = so3_kernel_modes(bw);
        assert!(n1 * n2 >= so3_coeff_count(bw));
        let shape = [2, n1, n2, 3];
        let kernel = Kernel::random(shape, None, 1.0, &mut rng).unwrap();
        let map = RealSpectralMap::so3(bw);
        let dense = kernel.dense();
        let spec = kernel_spectrum(&dense, shape, &map);
        let g: Vec<Complex64> = (0..spec.len()).map(|i| Complex64::new((i as f64 * 0.3).sin(), (i as f64 * 0.2).cos())).collect();
        let back = kernel_spectrum_grad(&g, shape, &map);
        let lhs: f64 = back.iter().zip(&dense).map(|(a, b)| a * b).sum();
        let rhs: f64 = g.iter().zip(&spec).map(|(a, b)| (a.conj() * b).re).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn ring_kernels_have_fewer_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n1, n2) = so3_kernel_modes(8);
        let k = Kernel::random([8, n1, n2, 16], Some(3), 1.0, &mut rng).unwrap();
        assert!(k.param_count() < k.dense_count());
    }
}
