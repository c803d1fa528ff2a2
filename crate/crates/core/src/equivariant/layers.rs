//! Trainable layers over batches of grid signals, with exact backward passes.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::correlate::{s2_correlate_backward, s2_correlate_core, so3_correlate_backward, so3_correlate_core};
use super::kernel::{kernel_spectrum, kernel_spectrum_grad, s2_kernel_modes, so3_kernel_modes, Kernel, RealSpectralMap};
use crate::error::{Error, Result};
use crate::harmonic::{S2Transform, SO3Grid, SO3Signal, SO3Transform, HAAR_VOLUME};

/// One flat value vector per sample, channel-major.
pub type Batch = Vec<Vec<f64>>;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    None,
    Act,
    Batch,
}

impl NormKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "act" | "actnorm" => Ok(Self::Act),
            "batch" | "batchnorm" => Ok(Self::Batch),
            _ => Err(Error::Config(format!("unknown normalization '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Act => "act",
            Self::Batch => "batch",
        }
    }
}

fn check_batch(xs: &[Vec<f64>], len: usize, what: &str) -> Result<()> {
    for (i, x) in xs.iter().enumerate() {
        if x.len() != len {
            return Err(Error::Shape(format!("{what}: sample {i} has {} values, expected {len}", x.len())));
        }
    }
    Ok(())
}

/// S² → SO(3) correlation with a real spectral kernel.
#[derive(Clone, Debug)]
pub struct S2Conv {
    bandwidth: usize,
    c_in: usize,
    c_out: usize,
    kernel: Kernel,
    map: RealSpectralMap,
}

impl S2Conv {
    pub fn new<R: Rng + ?Sized>(
        bandwidth: usize,
        c_in: usize,
        c_out: usize,
        ring_rank: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let (n1, n2) = s2_kernel_modes(bandwidth);
        let var = 1.0 / (c_in * bandwidth * bandwidth) as f64;
        let kernel = Kernel::random([c_in, n1, n2, c_out], ring_rank, var, rng)?;
        Self::from_kernel(bandwidth, kernel)
    }

    pub fn from_kernel(bandwidth: usize, kernel: Kernel) -> Result<Self> {
        let [c_in, n1, n2, c_out] = kernel.shape();
        if (n1, n2) != s2_kernel_modes(bandwidth) || c_in == 0 || c_out == 0 {
            return Err(Error::Shape(format!("kernel shape {:?} invalid at bandwidth {bandwidth}", kernel.shape())));
        }
        Ok(Self {
            bandwidth,
            c_in,
            c_out,
            kernel,
            map: RealSpectralMap::s2(bandwidth),
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel {
        &mut self.kernel
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        kernel_spectrum(&self.kernel.dense(), self.kernel.shape(), &self.map)
    }

    fn forward(&self, xs: &[Vec<f64>]) -> Result<(Batch, LayerCache)> {
        let b = self.bandwidth;
        check_batch(xs, self.c_in * 4 * b * b, "S² correlation input")?;
        let s2 = S2Transform::shared(b);
        let so3 = SO3Transform::shared(b);
        let w = self.spectrum();
        let (ys, fhats): (Vec<_>, Vec<_>) = xs
            .par_iter()
            .map(|x| s2_correlate_core(&s2, &so3, x, &w, self.c_in, self.c_out))
            .unzip();
        Ok((ys, LayerCache::Spectral { fhats, w }))
    }

    fn backward(&self, fhats: &[Vec<Complex64>], w: &[Complex64], gys: &[Vec<f64>]) -> Result<(Batch, Vec<f64>)> {
        let b = self.bandwidth;
        let s2 = S2Transform::shared(b);
        let so3 = SO3Transform::shared(b);
        let parts: Vec<(Vec<f64>, Vec<Complex64>)> = fhats
            .par_iter()
            .zip(gys.par_iter())
            .map(|(f, gy)| s2_correlate_backward(&s2, &so3, f, w, gy, self.c_in, self.c_out))
            .collect();
        spectral_param_grad(parts, &self.kernel, &self.map)
    }
}

/// Sums per-sample spectral gradients in sample order and maps them to kernel parameters.
fn spectral_param_grad(
    parts: Vec<(Vec<f64>, Vec<Complex64>)>,
    kernel: &Kernel,
    map: &RealSpectralMap,
) -> Result<(Batch, Vec<f64>)> {
    let mut total: Option<Vec<Complex64>> = None;
    let mut gxs = Vec::with_capacity(parts.len());
    for (gx, gw) in parts {
        gxs.push(gx);
        match &mut total {
            None => total = Some(gw),
            Some(t) => t.iter_mut().zip(&gw).for_each(|(a, b)| *a += b),
        }
    }
    let grad = match total {
        Some(t) => kernel.param_grad(&kernel_spectrum_grad(&t, kernel.shape(), map))?,
        None => vec![0.0; kernel.param_count()],
    };
    Ok((gxs, grad))
}

/// SO(3) → SO(3) correlation with a real spectral kernel.
#[derive(Clone, Debug)]
pub struct SO3Conv {
    bandwidth: usize,
    c_in: usize,
    c_out: usize,
    kernel: Kernel,
    map: RealSpectralMap,
}

impl SO3Conv {
    pub fn new<R: Rng + ?Sized>(
        bandwidth: usize,
        c_in: usize,
        c_out: usize,
        ring_rank: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let (n1, n2) = so3_kernel_modes(bandwidth);
        let var = 1.0 / (c_in * bandwidth * bandwidth) as f64;
        let kernel = Kernel::random([c_in, n1, n2, c_out], ring_rank, var, rng)?;
        Self::from_kernel(bandwidth, kernel)
    }

    pub fn from_kernel(bandwidth: usize, kernel: Kernel) -> Result<Self> {
        let [c_in, n1, n2, c_out] = kernel.shape();
        if (n1, n2) != so3_kernel_modes(bandwidth) || c_in == 0 || c_out == 0 {
            return Err(Error::Shape(format!("kernel shape {:?} invalid at bandwidth {bandwidth}", kernel.shape())));
        }
        Ok(Self {
            bandwidth,
            c_in,
            c_out,
            kernel,
            map: RealSpectralMap::so3(bandwidth),
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel {
        &mut self.kernel
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        kernel_spectrum(&self.kernel.dense(), self.kernel.shape(), &self.map)
    }

    fn forward(&self, xs: &[Vec<f64>]) -> Result<(Batch, LayerCache)> {
        let b = self.bandwidth;
        check_batch(xs, self.c_in * 8 * b * b * b, "SO(3) correlation input")?;
        let so3 = SO3Transform::shared(b);
        let w = self.spectrum();
        let (ys, fhats): (Vec<_>, Vec<_>) = xs
            .par_iter()
            .map(|x| so3_correlate_core(&so3, x, &w, self.c_in, self.c_out))
            .unzip();
        Ok((ys, LayerCache::Spectral { fhats, w }))
    }

    fn backward(&self, fhats: &[Vec<Complex64>], w: &[Complex64], gys: &[Vec<f64>]) -> Result<(Batch, Vec<f64>)> {
        let so3 = SO3Transform::shared(self.bandwidth);
        let parts: Vec<(Vec<f64>, Vec<Complex64>)> = fhats
            .par_iter()
            .zip(gys.par_iter())
            .map(|(f, gy)| so3_correlate_backward(&so3, f, w, gy, self.c_in, self.c_out))
            .collect();
        spectral_param_grad(parts, &self.kernel, &self.map)
    }
}

/// Per-channel affine `H ⊙ T + B`, initialized from the first batch it sees.
#[derive(Clone, Debug, PartialEq)]
pub struct Actnorm {
    pub scale: Vec<f64>,
    pub bias: Vec<f64>,
    pub initialized: bool,
}

impl Actnorm {
    pub fn new(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            bias: vec![0.0; channels],
            initialized: false,
        }
    }

    fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Sets scale and bias so every channel has zero mean and unit variance on `xs`.
    pub fn initialize(&mut self, xs: &[Vec<f64>]) -> Result<()> {
        let (mean, var) = channel_moments(xs, self.channels())?;
        for c in 0..self.channels() {
            let s = if var[c] > 1e-24 { 1.0 / var[c].sqrt() } else { 1.0 };
            self.scale[c] = s;
            self.bias[c] = -mean[c] * s;
        }
        self.initialized = true;
        Ok(())
    }

    fn forward(&mut self, xs: &[Vec<f64>]) -> Result<(Batch, LayerCache)> {
        if xs.is_empty() {
            return Ok((vec![], LayerCache::Input(vec![])));
        }
        if !self.initialized {
            self.initialize(xs)?;
        }
        let g = grid_len(xs, self.channels())?;
        let ys = xs
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| self.scale[i / g] * v + self.bias[i / g])
                    .collect()
            })
            .collect();
        Ok((ys, LayerCache::Input(xs.to_vec())))
    }

    fn backward(&self, xs: &[Vec<f64>], gys: &[Vec<f64>]) -> Result<(Batch, Vec<f64>)> {
        let c = self.channels();
        let mut gs = vec![0.0; c];
        let mut gb = vec![0.0; c];
        let mut gxs = Vec::with_capacity(gys.len());
        for (x, gy) in xs.iter().zip(gys) {
            let g = x.len() / c;
            let mut gx = vec![0.0; x.len()];
            for i in 0..x.len() {
                let ch = i / g;
                gs[ch] += gy[i] * x[i];
                gb[ch] += gy[i];
                gx[i] = self.scale[ch] * gy[i];
            }
            gxs.push(gx);
        }
        gs.extend(gb);
        Ok((gxs, gs))
    }
}

fn grid_len(xs: &[Vec<f64>], channels: usize) -> Result<usize> {
    let len = xs[0].len();
    if channels == 0 || len % channels != 0 || len == 0 {
        return Err(Error::Shape(format!("{len} values do not split into {channels} channels")));
    }
    check_batch(xs, len, "normalization input")?;
    Ok(len / channels)
}

/// Unweighted per-channel mean and variance over samples and grid points.
fn channel_moments(xs: &[Vec<f64>], channels: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if xs.is_empty() {
        return Err(Error::Empty("normalization statistics need a non-empty batch".into()));
    }
    let g = grid_len(xs, channels)?;
    let count = (xs.len() * g) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for x in xs {
        for (i, v) in x.iter().enumerate() {
            mean[i / g] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for x in xs {
        for (i, v) in x.iter().enumerate() {
            var[i / g] += (v - mean[i / g]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    Ok((mean, var))
}

/// Per-channel normalization over batch and grid with running statistics for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn forward(&mut self, xs: &[Vec<f64>], mode: Mode) -> Result<(Batch, LayerCache)> {
        if xs.is_empty() {
            return Err(Error::Empty("batch normalization needs at least one sample".into()));
        }
        let c = self.channels();
        let g = grid_len(xs, c)?;
        let (mean, var) = match mode {
            Mode::Train => {
                let (mean, var) = channel_moments(xs, c)?;
                for ch in 0..c {
                    self.running_mean[ch] = (1.0 - BN_MOMENTUM) * self.running_mean[ch] + BN_MOMENTUM * mean[ch];
                    self.running_var[ch] = (1.0 - BN_MOMENTUM) * self.running_var[ch] + BN_MOMENTUM * var[ch];
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let xhat: Batch = xs
            .iter()
            .map(|x| x.iter().enumerate().map(|(i, v)| (v - mean[i / g]) * inv[i / g]).collect())
            .collect();
        let ys = xhat
            .iter()
            .map(|x| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| self.gamma[i / g] * v + self.beta[i / g])
                    .collect()
            })
            .collect();
        Ok((
            ys,
            LayerCache::Norm {
                xhat,
                inv,
                batch_stats: mode == Mode::Train,
            },
        ))
    }

    fn backward(&self, xhat: &[Vec<f64>], inv: &[f64], batch_stats: bool, gys: &[Vec<f64>]) -> (Batch, Vec<f64>) {
        let c = self.channels();
        let g = xhat[0].len() / c;
        let m = (xhat.len() * g) as f64;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (x, gy) in xhat.iter().zip(gys) {
            for i in 0..x.len() {
                sum_g[i / g] += gy[i];
                sum_gx[i / g] += gy[i] * x[i];
            }
        }
        let gxs = xhat
            .iter()
            .zip(gys)
            .map(|(x, gy)| {
                (0..x.len())
                    .map(|i| {
                        let ch = i / g;
                        let k = self.gamma[ch] * inv[ch];
                        if batch_stats {
                            k * (gy[i] - sum_g[ch] / m - x[i] * sum_gx[ch] / m)
                        } else {
                            k * gy[i]
                        }
                    })
                    .collect()
            })
            .collect();
        let mut grad = sum_gx;
        grad.extend(sum_g);
        (gxs, grad)
    }
}

/// Haar integral over SO(3) per channel, normalized so the constant 1 maps to 1.
pub fn invariant_integrate(signal: &SO3Signal) -> Result<Vec<f64>> {
    let grid = SO3Grid::new(signal.bandwidth())?;
    Ok((0..signal.channels())
        .map(|c| grid.integrate(signal.channel(c)) / HAAR_VOLUME)
        .collect())
}

pub fn relu(signal: &SO3Signal) -> SO3Signal {
    let values = signal.values().iter().map(|v| v.max(0.0)).collect();
    SO3Signal::from_values(signal.bandwidth(), signal.channels(), values).expect("same shape")
}

#[derive(Clone, Debug)]
pub enum Layer {
    S2Conv(S2Conv),
    SO3Conv(SO3Conv),
    Relu,
    Actnorm(Actnorm),
    BatchNorm(BatchNorm),
    /// Haar integration of an SO(3) signal with the given bandwidth.
    Integrate(usize),
}

/// Values recorded by a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache {
    Spectral { fhats: Vec<Vec<Complex64>>, w: Vec<Complex64> },
    Input(Batch),
    Relu(Batch),
    Norm { xhat: Batch, inv: Vec<f64>, batch_stats: bool },
    Shape(usize),
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::S2Conv(l) => l.kernel.param_count(),
            Layer::SO3Conv(l) => l.kernel.param_count(),
            Layer::Actnorm(a) => 2 * a.channels(),
            Layer::BatchNorm(b) => 2 * b.channels(),
            Layer::Relu | Layer::Integrate(_) => 0,
        }
    }

    /// Parameter count if every kernel were stored densely.
    pub fn dense_param_count(&self) -> usize {
        match self {
            Layer::S2Conv(l) => l.kernel.dense_count(),
            Layer::SO3Conv(l) => l.kernel.dense_count(),
            other => other.param_count(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Layer::S2Conv(l) => l.kernel.params(),
            Layer::SO3Conv(l) => l.kernel.params(),
            Layer::Actnorm(a) => [a.scale.as_slice(), &a.bias].concat(),
            Layer::BatchNorm(b) => [b.gamma.as_slice(), &b.beta].concat(),
            Layer::Relu | Layer::Integrate(_) => vec![],
        }
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for a layer with {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        match self {
            Layer::S2Conv(l) => l.kernel.set_params(values)?,
            Layer::SO3Conv(l) => l.kernel.set_params(values)?,
            Layer::Actnorm(a) => {
                let c = a.channels();
                a.scale.copy_from_slice(&values[..c]);
                a.bias.copy_from_slice(&values[c..]);
            }
            Layer::BatchNorm(b) => {
                let c = b.channels();
                b.gamma.copy_from_slice(&values[..c]);
                b.beta.copy_from_slice(&values[c..]);
            }
            Layer::Relu | Layer::Integrate(_) => {}
        }
        Ok(())
    }

    /// Non-learned state: actnorm initialization flags and batchnorm running statistics.
    pub fn buffers(&self) -> Vec<f64> {
        match self {
            Layer::Actnorm(a) => vec![if a.initialized { 1.0 } else { 0.0 }],
            Layer::BatchNorm(b) => [b.running_mean.as_slice(), &b.running_var].concat(),
            _ => vec![],
        }
    }

    pub fn buffer_count(&self) -> usize {
        match self {
            Layer::Actnorm(_) => 1,
            Layer::BatchNorm(b) => 2 * b.channels(),
            _ => 0,
        }
    }

    pub fn set_buffers(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.buffer_count() {
            return Err(Error::Shape(format!("{} buffer values, expected {}", values.len(), self.buffer_count())));
        }
        match self {
            Layer::Actnorm(a) => a.initialized = values[0] != 0.0,
            Layer::BatchNorm(b) => {
                let c = b.channels();
                b.running_mean.copy_from_slice(&values[..c]);
                b.running_var.copy_from_slice(&values[c..]);
            }
            _ => {}
        }
        Ok(())
    }

    pub fn forward(&mut self, xs: &[Vec<f64>], mode: Mode) -> Result<(Batch, LayerCache)> {
        match self {
            Layer::S2Conv(l) => l.forward(xs),
            Layer::SO3Conv(l) => l.forward(xs),
            Layer::Relu => Ok((
                xs.iter().map(|x| x.iter().map(|v| v.max(0.0)).collect()).collect(),
                LayerCache::Relu(xs.to_vec()),
            )),
            Layer::Actnorm(a) => a.forward(xs),
            Layer::BatchNorm(b) => b.forward(xs, mode),
            Layer::Integrate(bw) => {
                let grid = SO3Grid::new(*bw)?;
                let n = grid.len();
                let weights: Vec<f64> = (0..n).map(|i| grid.weight(i) / HAAR_VOLUME).collect();
                let mut ys = Vec::with_capacity(xs.len());
                for x in xs {
                    if x.is_empty() || x.len() % n != 0 {
                        return Err(Error::Shape(format!("{} values are not whole SO(3) grids of {n}", x.len())));
                    }
                    ys.push(x.chunks_exact(n).map(|c| c.iter().zip(&weights).map(|(a, b)| a * b).sum()).collect());
                }
                Ok((ys, LayerCache::Shape(n)))
            }
        }
    }

    /// Input gradients and the gradient of [`Layer::params`], summed over the batch.
    pub fn backward(&self, cache: &LayerCache, gys: &[Vec<f64>]) -> Result<(Batch, Vec<f64>)> {
        let mismatch = || Error::State("backward called with a record from a different layer".into());
        match (self, cache) {
            (Layer::S2Conv(l), LayerCache::Spectral { fhats, w }) => {
                check_len(fhats.len(), gys.len())?;
                l.backward(fhats, w, gys)
            }
            (Layer::SO3Conv(l), LayerCache::Spectral { fhats, w }) => {
                check_len(fhats.len(), gys.len())?;
                l.backward(fhats, w, gys)
            }
            (Layer::Relu, LayerCache::Relu(xs)) => {
                check_len(xs.len(), gys.len())?;
                let gxs = xs
                    .iter()
                    .zip(gys)
                    .map(|(x, g)| x.iter().zip(g).map(|(v, g)| if *v > 0.0 { *g } else { 0.0 }).collect())
                    .collect();
                Ok((gxs, vec![]))
            }
            (Layer::Actnorm(a), LayerCache::Input(xs)) => {
                check_len(xs.len(), gys.len())?;
                a.backward(xs, gys)
            }
            (Layer::BatchNorm(b), LayerCache::Norm { xhat, inv, batch_stats }) => {
                check_len(xhat.len(), gys.len())?;
                if xhat.is_empty() {
                    return Ok((vec![], vec![0.0; 2 * b.channels()]));
                }
                Ok(b.backward(xhat, inv, *batch_stats, gys))
            }
            (Layer::Integrate(bw), LayerCache::Shape(n)) => {
                let grid = SO3Grid::new(*bw)?;
                let weights: Vec<f64> = (0..*n).map(|i| grid.weight(i) / HAAR_VOLUME).collect();
                let gxs = gys
                    .iter()
                    .map(|g| {
                        g.iter()
                            .flat_map(|gc| weights.iter().map(move |w| gc * w))
                            .collect()
                    })
                    .collect();
                Ok((gxs, vec![]))
            }
            _ => Err(mismatch()),
        }
    }
}

fn check_len(recorded: usize, given: usize) -> Result<()> {
    if recorded != given {
        return Err(Error::Shape(format!("record has {recorded} samples, gradient has {given}")));
    }
    Ok(())
}

/// Layout of the equivariant feature extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct StackConfig {
    pub bandwidth: usize,
    pub in_channels: usize,
    /// Output widths: the first belongs to the S² correlation, the rest to SO(3) correlations.
    pub widths: Vec<usize>,
    pub norm: NormKind,
    pub ring_rank: Option<usize>,
    /// ReLU after every correlation.
    pub activation: bool,
}

impl StackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth < 2 {
            return Err(Error::Config(format!("bandwidth must be at least 2, got {}", self.bandwidth)));
        }
        if self.in_channels == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("channel widths must be positive and non-empty".into()));
        }
        if self.ring_rank == Some(0) {
            return Err(Error::Config("tensor-ring rank must be positive".into()));
        }
        Ok(())
    }
}

/// Records of one forward pass through a stack.
#[derive(Clone, Debug)]
pub struct Tape {
    caches: Vec<LayerCache>,
}

impl Tape {
    /// Sign of every ReLU input; two passes with equal patterns lie in the same smooth piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.caches
            .iter()
            .filter_map(|c| match c {
                LayerCache::Relu(xs) => Some(xs.iter().flatten().map(|v| *v > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// S² correlation, then SO(3) correlations, then Haar integration, producing one
/// rotation-invariant vector per input signal.
#[derive(Clone, Debug)]
pub struct EquivariantStack {
    config: StackConfig,
    layers: Vec<Layer>,
}

impl EquivariantStack {
    pub fn new<R: Rng + ?Sized>(config: StackConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let b = config.bandwidth;
        let mut layers = vec![];
        let mut c_in = config.in_channels;
        for (i, &w) in config.widths.iter().enumerate() {
            if i == 0 {
                layers.push(Layer::S2Conv(S2Conv::new(b, c_in, w, config.ring_rank, rng)?));
            } else {
                layers.push(Layer::SO3Conv(SO3Conv::new(b, c_in, w, config.ring_rank, rng)?));
            }
            if config.activation {
                layers.push(Layer::Relu);
            }
            match config.norm {
                NormKind::None => {}
                NormKind::Act => layers.push(Layer::Actnorm(Actnorm::new(w))),
                NormKind::Batch => layers.push(Layer::BatchNorm(BatchNorm::new(w))),
            }
            c_in = w;
        }
        layers.push(Layer::Integrate(b));
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &StackConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.config.in_channels * 4 * self.config.bandwidth * self.config.bandwidth
    }

    pub fn output_dim(&self) -> usize {
        *self.config.widths.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn dense_param_count(&self) -> usize {
        self.layers.iter().map(Layer::dense_param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!("{} values for {} parameters", values.len(), self.param_count())));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let n = layer.param_count();
            layer.set_params(&values[at..at + n])?;
            at += n;
        }
        Ok(())
    }

    pub fn buffers(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Layer::buffers).collect()
    }

    pub fn set_buffers(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.layers.iter().map(Layer::buffer_count).sum();
        if values.len() != total {
            return Err(Error::Shape(format!("{} buffer values, expected {total}", values.len())));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let n = layer.buffer_count();
            layer.set_buffers(&values[at..at + n])?;
            at += n;
        }
        Ok(())
    }

    pub fn forward(&mut self, inputs: &[Vec<f64>], mode: Mode) -> Result<(Batch, Tape)> {
        check_batch(inputs, self.input_len(), "stack input")?;
        let mut xs = inputs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (ys, cache) = layer.forward(&xs, mode)?;
            caches.push(cache);
            xs = ys;
        }
        Ok((xs, Tape { caches }))
    }

    /// Sets every batch-norm running mean and variance to the average of its batch
    /// statistics over `batches`, all taken at the current parameters.
    pub fn recalibrate(&mut self, batches: &[Batch]) -> Result<()> {
        if batches.is_empty() {
            return Err(Error::Empty("recalibration needs at least one batch".into()));
        }
        let mut sums: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; self.layers.len()];
        for inputs in batches {
            check_batch(inputs, self.input_len(), "stack input")?;
            let mut xs = inputs.clone();
            for (layer, sum) in self.layers.iter_mut().zip(&mut sums) {
                if let Layer::BatchNorm(b) = layer {
                    let (mean, var) = channel_moments(&xs, b.channels())?;
                    let (sm, sv) = sum.get_or_insert_with(|| (vec![0.0; mean.len()], vec![0.0; var.len()]));
                    sm.iter_mut().zip(&mean).for_each(|(s, v)| *s += v);
                    sv.iter_mut().zip(&var).for_each(|(s, v)| *s += v);
                }
                xs = layer.forward(&xs, Mode::Train)?.0;
            }
        }
        let k = batches.len() as f64;
        for (layer, sum) in self.layers.iter_mut().zip(sums) {
            if let (Layer::BatchNorm(b), Some((mean, var))) = (layer, sum) {
                b.running_mean = mean.into_iter().map(|v| v / k).collect();
                b.running_var = var.into_iter().map(|v| v / k).collect();
            }
        }
        Ok(())
    }

    /// Forward without keeping a record.
    pub fn infer(&mut self, inputs: &[Vec<f64>], mode: Mode) -> Result<Batch> {
        Ok(self.forward(inputs, mode)?.0)
    }

    /// Input gradients and the gradient of [`EquivariantStack::params`].
    pub fn backward(&self, tape: &Tape, grad_out: &[Vec<f64>]) -> Result<(Batch, Vec<f64>)> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::State("forward record does not belong to this stack".into()));
        }
        let mut g = grad_out.to_vec();
        let mut grads: Vec<Vec<f64>> = vec![vec![]; self.layers.len()];
        for (i, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let (gx, gp) = layer.backward(cache, &g)?;
            grads[i] = gp;
            g = gx;
        }
        Ok((g, grads.concat()))
    }
}
