use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W` stored row-major as `outputs × inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    inputs: usize,
    outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights with variance `1 / inputs`, zero bias.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Config("linear layer sizes must be positive".into()));
        }
        let normal = Normal::new(0.0, (1.0 / inputs as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let mut layer = Self::zeros(inputs, outputs);
        layer.weight.iter_mut().for_each(|w| *w = normal.sample(rng));
        Ok(layer)
    }

    pub fn from_parts(inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "linear {inputs}→{outputs} needs {} weights and {outputs} biases",
                inputs * outputs
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<f64> {
        [self.weight.as_slice(), &self.bias].concat()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for a linear layer with {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let (w, b) = values.split_at(self.weight.len());
        self.weight.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o]
            })
            .collect()
    }

    /// Accumulates the parameter gradient into `grad` (laid out as [`Linear::params`])
    /// and returns the input gradient.
    pub fn backward(&self, x: &[f64], gy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.inputs];
        let nw = self.weight.len();
        for o in 0..self.outputs {
            let g = gy[o];
            if g == 0.0 {
                continue;
            }
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
            grad[nw + o] += g;
        }
        gx
    }
}
