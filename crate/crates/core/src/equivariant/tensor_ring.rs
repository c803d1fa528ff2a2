use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Tensor stored as a ring of order-3 cores, `W(i_1..i_k) = tr(T_1(i_1) ··· T_k(i_k))`.
///
/// Core `j` has shape `n_j × p × p`, flattened as `(i * p + a) * p + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRingKernel {
    mode_sizes: Vec<usize>,
    rank: usize,
    cores: Vec<Vec<f64>>,
}

impl TensorRingKernel {
    pub fn from_cores(mode_sizes: Vec<usize>, rank: usize, cores: Vec<Vec<f64>>) -> Result<Self> {
        if mode_sizes.len() < 2 {
            return Err(Error::Shape("a tensor ring needs at least two modes".into()));
        }
        if rank == 0 || mode_sizes.contains(&0) {
            return Err(Error::Shape("tensor ring rank and mode sizes must be positive".into()));
        }
        if cores.len() != mode_sizes.len() {
            return Err(Error::Shape(format!("{} cores for {} modes", cores.len(), mode_sizes.len())));
        }
        for (j, (core, n)) in cores.iter().zip(&mode_sizes).enumerate() {
            if core.len() != n * rank * rank {
                return Err(Error::Shape(format!(
                    "core {j} has {} entries, expected {n}×{rank}×{rank}",
                    core.len()
                )));
            }
        }
        Ok(Self {
            mode_sizes,
            rank,
            cores,
        })
    }

    /// Cores with i.i.d. normal entries chosen so materialized entries have variance `target_var`.
    pub fn random<R: Rng + ?Sized>(mode_sizes: Vec<usize>, rank: usize, target_var: f64, rng: &mut R) -> Result<Self> {
        let k = mode_sizes.len() as i32;
        // An entry is a sum of p^k products of k independent core entries.
        let core_var = (target_var / (rank as f64).powi(k)).powf(1.0 / k as f64);
        let normal = Normal::new(0.0, core_var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let cores = mode_sizes
            .iter()
            .map(|n| (0..n * rank * rank).map(|_| normal.sample(rng)).collect())
            .collect();
        Self::from_cores(mode_sizes, rank, cores)
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cores(&self) -> &[Vec<f64>] {
        &self.cores
    }

    /// Learnable scalars, `p² Σ n_j`.
    pub fn param_count(&self) -> usize {
        self.rank * self.rank * self.mode_sizes.iter().sum::<usize>()
    }

    pub fn dense_count(&self) -> usize {
        self.mode_sizes.iter().product()
    }

    pub fn params(&self) -> Vec<f64> {
        self.cores.concat()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} tensor-ring parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for core in &mut self.cores {
            let n = core.len();
            core.copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Products `T_{o_1}(i_1) ··· T_{o_r}(i_r)` for every index tuple over the listed
    /// modes, row-major in that order, each a `p × p` block.
    fn chain(&self, order: &[usize]) -> Vec<f64> {
        let p = self.rank;
        let pp = p * p;
        let mut acc = self.cores[order[0]].clone();
        let mut count = self.mode_sizes[order[0]];
        for &j in &order[1..] {
            let n = self.mode_sizes[j];
            let core = &self.cores[j];
            let mut next = vec![0.0; count * n * pp];
            for u in 0..count {
                let left = &acc[u * pp..(u + 1) * pp];
                for i in 0..n {
                    let right = &core[i * pp..(i + 1) * pp];
                    let out = &mut next[(u * n + i) * pp..(u * n + i + 1) * pp];
                    for a in 0..p {
                        for c in 0..p {
                            let l = left[a * p + c];
                            if l == 0.0 {
                                continue;
                            }
                            for b in 0..p {
                                out[a * p + b] += l * right[c * p + b];
                            }
                        }
                    }
                }
            }
            acc = next;
            count *= n;
        }
        acc
    }

    /// Dense tensor, row-major over the modes.
    pub fn materialize(&self) -> Vec<f64> {
        let p = self.rank;
        let order: Vec<usize> = (0..self.mode_sizes.len()).collect();
        self.chain(&order)
            .chunks_exact(p * p)
            .map(|m| (0..p).map(|a| m[a * p + a]).sum())
            .collect()
    }

    /// Gradients of the cores given the gradient of the dense tensor.
    ///
    /// `∂W(i)/∂T_j(i_j)[a][b] = E_j[b][a]` with `E_j` the cyclic product of the other
    /// cores starting after mode `j`.
    pub fn backward(&self, grad_dense: &[f64]) -> Result<Vec<Vec<f64>>> {
        if grad_dense.len() != self.dense_count() {
            return Err(Error::Shape(format!(
                "gradient has {} entries, tensor has {}",
                grad_dense.len(),
                self.dense_count()
            )));
        }
        let k = self.mode_sizes.len();
        let p = self.rank;
        let pp = p * p;
        // Row-major strides of the dense tensor.
        let mut strides = vec![1usize; k];
        for j in (0..k - 1).rev() {
            strides[j] = strides[j + 1] * self.mode_sizes[j + 1];
        }
        let mut grads = Vec::with_capacity(k);
        for j in 0..k {
            let order: Vec<usize> = (1..k).map(|s| (j + s) % k).collect();
            let env = self.chain(&order);
            let mut g = vec![0.0; self.mode_sizes[j] * pp];
            for (flat, &gv) in grad_dense.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let ij = (flat / strides[j]) % self.mode_sizes[j];
                let mut rest = 0;
                for &o in &order {
                    rest = rest * self.mode_sizes[o] + (flat / strides[o]) % self.mode_sizes[o];
                }
                let e = &env[rest * pp..(rest + 1) * pp];
                let out = &mut g[ij * pp..(ij + 1) * pp];
                for a in 0..p {
                    for b in 0..p {
                        out[a * p + b] += gv * e[b * p + a];
                    }
                }
            }
            grads.push(g);
        }
        Ok(grads)
    }
}

pub fn tr_materialize(kernel: &TensorRingKernel) -> Vec<f64> {
    kernel.materialize()
}

pub fn tr_param_count(kernel: &TensorRingKernel) -> usize {
    kernel.param_count()
}
