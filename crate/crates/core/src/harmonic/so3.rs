//! Fourier analysis on SO(3) by separation of variables.
//!
//! `D^l_{mn}(α, β, γ) = e^{-imα} d^l_{mn}(β) e^{-inγ}`; synthesis is
//! `f = Σ f̂(l,m,n) D^l_{mn}` and analysis uses the orthogonality
//! `∫ D^l_{mn} conj(D^{l'}_{m'n'}) dg = 8π²/(2l+1) δ`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use super::quadrature::{azimuth_angles, polar_angles, polar_weights};
use super::wigner::{wigner_big_d, wigner_d_all};
use super::{check_imaginary, ZERO};
use crate::envelope;
use crate::error::{Error, Result};
use crate::geometry::Rotation;

/// Haar volume of SO(3) in ZYZ coordinates.
pub const HAAR_VOLUME: f64 = 8.0 * PI * PI;

/// Number of `(l, m, n)` triples below bandwidth `B`: `B(4B² - 1)/3`.
pub fn so3_coeff_count(bandwidth: usize) -> usize {
    (bandwidth * (4 * bandwidth * bandwidth).saturating_sub(1)) / 3
}

/// Offset of the degree-`l` block.
#[inline]
pub fn so3_block_offset(l: usize) -> usize {
    so3_coeff_count(l)
}

#[inline]
pub fn so3_index(l: usize, m: i64, n: i64) -> usize {
    let w = 2 * l + 1;
    let li = l as i64;
    so3_block_offset(l) + (m + li) as usize * w + (n + li) as usize
}

/// Euler-angle grid `α_a = 2πa/2B`, `β_b = π(2b+1)/4B`, `γ_c = 2πc/2B`.
#[derive(Clone, Debug)]
pub struct SO3Grid {
    bandwidth: usize,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    gammas: Vec<f64>,
    beta_weights: Vec<f64>,
}

impl SO3Grid {
    pub fn new(bandwidth: usize) -> Result<Self> {
        if bandwidth < 2 {
            return Err(Error::Config(format!("bandwidth must be at least 2, got {bandwidth}")));
        }
        let step = 2.0 * PI / (2 * bandwidth) as f64;
        Ok(Self {
            bandwidth,
            alphas: azimuth_angles(bandwidth),
            betas: polar_angles(bandwidth),
            gammas: azimuth_angles(bandwidth),
            beta_weights: polar_weights(bandwidth).iter().map(|w| w * step * step).collect(),
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn len(&self) -> usize {
        8 * self.bandwidth.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidth == 0
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Haar weight of every grid point with polar index `b`.
    pub fn beta_weights(&self) -> &[f64] {
        &self.beta_weights
    }

    /// Weight of flat grid index `(a * 2B + b) * 2B + c`.
    #[inline]
    pub fn weight(&self, flat: usize) -> f64 {
        let n = 2 * self.bandwidth;
        self.beta_weights[(flat / n) % n]
    }

    pub fn rotation(&self, a: usize, b: usize, c: usize) -> Rotation {
        Rotation::from_euler_zyz(self.alphas[a], self.betas[b], self.gammas[c])
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(i, v)| v * self.weight(i)).sum()
    }
}

/// Multi-channel real function on an [`SO3Grid`]; values are `[channel][α][β][γ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SO3Signal {
    bandwidth: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SO3Signal {
    pub fn zeros(bandwidth: usize, channels: usize) -> Self {
        Self {
            bandwidth,
            channels,
            values: vec![0.0; channels * 8 * bandwidth.pow(3)],
        }
    }

    pub fn from_values(bandwidth: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * 8 * bandwidth.pow(3) {
            return Err(Error::Shape(format!(
                "{} values for {channels} channels on the SO(3) grid of bandwidth {bandwidth}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("SO(3) signal has non-finite values".into()));
        }
        Ok(Self {
            bandwidth,
            channels,
            values,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid_len(&self) -> usize {
        8 * self.bandwidth.pow(3)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid_len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid_len();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        envelope::encode(self.bandwidth, self.channels, &self.values)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (b, c, values) = envelope::decode(bytes)?;
        Self::from_values(b, c, values)
    }
}

/// Complex SO(3) Fourier coefficients, `[channel][so3_index(l, m, n)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SO3Spectrum {
    bandwidth: usize,
    channels: usize,
    coeffs: Vec<Complex64>,
}

impl SO3Spectrum {
    pub fn zeros(bandwidth: usize, channels: usize) -> Self {
        Self {
            bandwidth,
            channels,
            coeffs: vec![ZERO; channels * so3_coeff_count(bandwidth)],
        }
    }

    pub fn from_coeffs(bandwidth: usize, channels: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != channels * so3_coeff_count(bandwidth) {
            return Err(Error::Shape(format!(
                "{} coefficients for {channels} channels at bandwidth {bandwidth}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numerical("SO(3) spectrum has non-finite coefficients".into()));
        }
        Ok(Self {
            bandwidth,
            channels,
            coeffs,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let k = so3_coeff_count(self.bandwidth);
        &self.coeffs[c * k..(c + 1) * k]
    }

    pub fn get(&self, c: usize, l: usize, m: i64, n: i64) -> Complex64 {
        self.coeffs[c * so3_coeff_count(self.bandwidth) + so3_index(l, m, n)]
    }

    pub fn set(&mut self, c: usize, l: usize, m: i64, n: i64, v: Complex64) {
        let k = so3_coeff_count(self.bandwidth);
        self.coeffs[c * k + so3_index(l, m, n)] = v;
    }

    /// `Σ (8π²/(2l+1)) |f̂(l,m,n)|²`, the squared L² norm of the synthesized function.
    pub fn energy(&self) -> f64 {
        let k = so3_coeff_count(self.bandwidth);
        let mut total = 0.0;
        for c in 0..self.channels {
            for l in 0..self.bandwidth {
                let w = 2 * l + 1;
                let block = &self.coeffs[c * k + so3_block_offset(l)..c * k + so3_block_offset(l) + w * w];
                total += HAAR_VOLUME / w as f64 * block.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        total
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let flat: Vec<f64> = self.coeffs.iter().flat_map(|z| [z.re, z.im]).collect();
        envelope::encode(self.bandwidth, self.channels, &flat)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (b, c, flat) = envelope::decode(bytes)?;
        if flat.len() % 2 != 0 {
            return Err(Error::Format("odd number of spectral values".into()));
        }
        let coeffs = flat.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        Self::from_coeffs(b, c, coeffs)
    }
}

/// Precomputed Wigner tables and twiddles for one bandwidth.
#[derive(Debug)]
pub struct SO3Transform {
    bandwidth: usize,
    grid: SO3Grid,
    /// `[β index][so3_index(l, m, n)]` of `d^l_{mn}(β_b)`.
    dtab: Vec<f64>,
    /// `[angle index][k + B - 1]` of `e^{ik·angle}`; α and γ share the same samples.
    twiddle: Vec<Complex64>,
    /// `(2l+1)/8π²` per coefficient.
    scale: Vec<f64>,
}

impl SO3Transform {
    pub fn new(bandwidth: usize) -> Result<Self> {
        let grid = SO3Grid::new(bandwidth)?;
        let k = so3_coeff_count(bandwidth);
        let mut dtab = Vec::with_capacity(2 * bandwidth * k);
        for &beta in grid.betas() {
            for d in wigner_d_all(bandwidth, beta) {
                dtab.extend(d);
            }
        }
        let span = 2 * bandwidth - 1;
        let mut twiddle = Vec::with_capacity(2 * bandwidth * span);
        for &angle in grid.alphas() {
            for j in 0..span {
                let k = j as f64 - (bandwidth as f64 - 1.0);
                twiddle.push(Complex64::from_polar(1.0, k * angle));
            }
        }
        let mut scale = Vec::with_capacity(k);
        for l in 0..bandwidth {
            let w = 2 * l + 1;
            scale.extend(std::iter::repeat_n(w as f64 / HAAR_VOLUME, w * w));
        }
        Ok(Self {
            bandwidth,
            grid,
            dtab,
            twiddle,
            scale,
        })
    }

    /// Process-wide cached instance. Panics only if `bandwidth < 2`.
    pub fn shared(bandwidth: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SO3Transform>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(bandwidth)
            .or_insert_with(|| Arc::new(Self::new(bandwidth).expect("bandwidth at least 2")))
            .clone()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn grid(&self) -> &SO3Grid {
        &self.grid
    }

    /// `(2l+1)/8π²` for each flat coefficient index.
    pub fn degree_scale(&self) -> &[f64] {
        &self.scale
    }

    /// `Σ_{a,b,c} q_b f(a,b,c) conj(D(a,b,c))` for one channel with caller-chosen β weights.
    pub fn forward_core(&self, values: &[f64], beta_weights: &[f64]) -> Vec<Complex64> {
        let bw = self.bandwidth;
        let n = 2 * bw;
        let span = 2 * bw - 1;
        let k = so3_coeff_count(bw);
        let off = bw as i64 - 1;
        let mut out = vec![ZERO; k];
        let mut h = vec![ZERO; n * span];
        let mut f = vec![ZERO; span * span];
        for b in 0..n {
            // H(a, n) = Σ_c f(a,b,c) e^{inγ_c}
            for a in 0..n {
                let row = &values[(a * n + b) * n..(a * n + b + 1) * n];
                let hrow = &mut h[a * span..(a + 1) * span];
                hrow.iter_mut().for_each(|z| *z = ZERO);
                for (c, &v) in row.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let tw = &self.twiddle[c * span..(c + 1) * span];
                    for (z, t) in hrow.iter_mut().zip(tw) {
                        *z += t * v;
                    }
                }
            }
            // F(m, n) = Σ_a e^{imα_a} H(a, n)
            f.iter_mut().for_each(|z| *z = ZERO);
            for a in 0..n {
                let tw = &self.twiddle[a * span..(a + 1) * span];
                let hrow = &h[a * span..(a + 1) * span];
                for (mi, t) in tw.iter().enumerate() {
                    let frow = &mut f[mi * span..(mi + 1) * span];
                    for (z, hv) in frow.iter_mut().zip(hrow) {
                        *z += t * hv;
                    }
                }
            }
            let d = &self.dtab[b * k..(b + 1) * k];
            let wb = beta_weights[b];
            for l in 0..bw {
                let li = l as i64;
                let base = so3_block_offset(l);
                let w = 2 * l + 1;
                for m in -li..=li {
                    let frow = &f[(m + off) as usize * span..];
                    let drow = base + (m + li) as usize * w;
                    for nn in -li..=li {
                        let j = drow + (nn + li) as usize;
                        out[j] += frow[(nn + off) as usize] * (wb * d[j]);
                    }
                }
            }
        }
        out
    }

    /// `Σ c(l,m,n) D^l_{mn}` on the grid, one channel, complex.
    pub fn synth_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let bw = self.bandwidth;
        let n = 2 * bw;
        let span = 2 * bw - 1;
        let k = so3_coeff_count(bw);
        let off = bw as i64 - 1;
        let mut out = vec![ZERO; n * n * n];
        let mut g = vec![ZERO; span * span];
        let mut h = vec![ZERO; span];
        for b in 0..n {
            let d = &self.dtab[b * k..(b + 1) * k];
            g.iter_mut().for_each(|z| *z = ZERO);
            for l in 0..bw {
                let li = l as i64;
                let base = so3_block_offset(l);
                let w = 2 * l + 1;
                for m in -li..=li {
                    let grow = &mut g[(m + off) as usize * span..];
                    let drow = base + (m + li) as usize * w;
                    for nn in -li..=li {
                        let j = drow + (nn + li) as usize;
                        grow[(nn + off) as usize] += coeffs[j] * d[j];
                    }
                }
            }
            for a in 0..n {
                // H(n) = Σ_m G(m, n) e^{-imα_a}
                let tw = &self.twiddle[a * span..(a + 1) * span];
                h.iter_mut().for_each(|z| *z = ZERO);
                for (mi, t) in tw.iter().enumerate() {
                    let tc = t.conj();
                    for (z, gv) in h.iter_mut().zip(&g[mi * span..(mi + 1) * span]) {
                        *z += tc * gv;
                    }
                }
                for c in 0..n {
                    let twc = &self.twiddle[c * span..(c + 1) * span];
                    out[(a * n + b) * n + c] = h.iter().zip(twc).map(|(hv, t)| hv * t.conj()).sum();
                }
            }
        }
        out
    }

    pub fn synth_core(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.synth_complex(coeffs).into_iter().map(|z| z.re).collect()
    }

    /// Quadrature analysis of one channel.
    pub fn analyze_channel(&self, values: &[f64]) -> Vec<Complex64> {
        let mut out = self.forward_core(values, self.grid.beta_weights());
        for (z, s) in out.iter_mut().zip(&self.scale) {
            *z *= *s;
        }
        out
    }

    /// Adjoint of [`Self::analyze_channel`].
    pub fn analyze_adjoint(&self, grad: &[Complex64]) -> Vec<f64> {
        let scaled: Vec<Complex64> = grad.iter().zip(&self.scale).map(|(g, s)| g * *s).collect();
        let mut out = self.synth_core(&scaled);
        for (i, v) in out.iter_mut().enumerate() {
            *v *= self.grid.weight(i);
        }
        out
    }

    /// Adjoint of [`Self::synth_core`].
    pub fn synth_adjoint(&self, grad: &[f64]) -> Vec<Complex64> {
        let ones = vec![1.0; 2 * self.bandwidth];
        self.forward_core(grad, &ones)
    }

    pub fn analyze(&self, signal: &SO3Signal) -> Result<SO3Spectrum> {
        if signal.bandwidth() != self.bandwidth {
            return Err(Error::Shape(format!(
                "signal bandwidth {} but grid bandwidth {}",
                signal.bandwidth(),
                self.bandwidth
            )));
        }
        let coeffs = (0..signal.channels())
            .flat_map(|c| self.analyze_channel(signal.channel(c)))
            .collect();
        SO3Spectrum::from_coeffs(self.bandwidth, signal.channels(), coeffs)
    }

    pub fn synthesize(&self, spectrum: &SO3Spectrum) -> Result<SO3Signal> {
        if spectrum.bandwidth() != self.bandwidth {
            return Err(Error::Shape(format!(
                "spectrum bandwidth {} but grid bandwidth {}",
                spectrum.bandwidth(),
                self.bandwidth
            )));
        }
        let mut values = Vec::with_capacity(spectrum.channels() * self.grid.len());
        for c in 0..spectrum.channels() {
            let z = self.synth_complex(spectrum.channel(c));
            check_imaginary(&z)?;
            values.extend(z.into_iter().map(|z| z.re));
        }
        SO3Signal::from_values(self.bandwidth, spectrum.channels(), values)
    }
}

pub fn so3_synthesize(spectrum: &SO3Spectrum, grid: &SO3Grid) -> Result<SO3Signal> {
    if grid.bandwidth() < 2 {
        return Err(Error::Config("bandwidth must be at least 2".into()));
    }
    SO3Transform::shared(grid.bandwidth()).synthesize(spectrum)
}

pub fn so3_analyze(signal: &SO3Signal, grid: &SO3Grid) -> Result<SO3Spectrum> {
    if grid.bandwidth() < 2 {
        return Err(Error::Config("bandwidth must be at least 2".into()));
    }
    SO3Transform::shared(grid.bandwidth()).analyze(signal)
}

/// Dense reference synthesis, `O(B⁶)`, one channel.
pub fn so3_synthesize_direct(spectrum: &SO3Spectrum, channel: usize) -> Vec<Complex64> {
    let grid = SO3Grid::new(spectrum.bandwidth()).expect("bandwidth at least 2");
    let n = 2 * spectrum.bandwidth();
    let mut out = Vec::with_capacity(n * n * n);
    for &alpha in grid.alphas() {
        for &beta in grid.betas() {
            for &gamma in grid.gammas() {
                out.push(evaluate_euler(spectrum, channel, alpha, beta, gamma));
            }
        }
    }
    out
}

/// Dense reference analysis by direct Haar quadrature.
pub fn so3_analyze_direct(signal: &SO3Signal) -> SO3Spectrum {
    let bw = signal.bandwidth();
    let grid = SO3Grid::new(bw).expect("bandwidth at least 2");
    let n = 2 * bw;
    let mut out = SO3Spectrum::zeros(bw, signal.channels());
    for (a, &alpha) in grid.alphas().iter().enumerate() {
        for (b, &beta) in grid.betas().iter().enumerate() {
            for (c, &gamma) in grid.gammas().iter().enumerate() {
                let flat = (a * n + b) * n + c;
                let w = grid.beta_weights()[b];
                for l in 0..bw {
                    let d = wigner_big_d(l, alpha, beta, gamma);
                    let width = 2 * l + 1;
                    let norm = width as f64 / HAAR_VOLUME;
                    let li = l as i64;
                    for m in -li..=li {
                        for nn in -li..=li {
                            let basis = d[(m + li) as usize * width + (nn + li) as usize].conj();
                            for ch in 0..signal.channels() {
                                let v = signal.channel(ch)[flat] * w * norm;
                                let cur = out.get(ch, l, m, nn);
                                out.set(ch, l, m, nn, cur + basis * v);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn evaluate_euler(spectrum: &SO3Spectrum, channel: usize, alpha: f64, beta: f64, gamma: f64) -> Complex64 {
    let mut acc = ZERO;
    for l in 0..spectrum.bandwidth() {
        let d = wigner_big_d(l, alpha, beta, gamma);
        let w = 2 * l + 1;
        let li = l as i64;
        for m in -li..=li {
            for nn in -li..=li {
                acc += spectrum.get(channel, l, m, nn) * d[(m + li) as usize * w + (nn + li) as usize];
            }
        }
    }
    acc
}

/// Value of one channel of the band-limited function at an arbitrary rotation.
pub fn evaluate_so3(spectrum: &SO3Spectrum, channel: usize, rotation: &Rotation) -> Complex64 {
    let (alpha, beta, gamma) = rotation.to_euler_zyz();
    evaluate_euler(spectrum, channel, alpha, beta, gamma)
}

/// Spectrum of the left translate `g ↦ f(R⁻¹g)`: each block multiplied by `conj(D^l(R))`.
pub fn rotate_so3(spectrum: &SO3Spectrum, rotation: &Rotation) -> SO3Spectrum {
    let (alpha, beta, gamma) = rotation.to_euler_zyz();
    let mut out = SO3Spectrum::zeros(spectrum.bandwidth(), spectrum.channels());
    for l in 0..spectrum.bandwidth() {
        let d = wigner_big_d(l, alpha, beta, gamma);
        let w = 2 * l + 1;
        let li = l as i64;
        for c in 0..spectrum.channels() {
            for k in -li..=li {
                for nn in -li..=li {
                    let mut acc = ZERO;
                    for m in -li..=li {
                        acc += d[(k + li) as usize * w + (m + li) as usize].conj() * spectrum.get(c, l, m, nn);
                    }
                    out.set(c, l, k, nn, acc);
                }
            }
        }
    }
    out
}

/// Random spectrum of a real band-limited function on SO(3):
/// `f̂(l,-m,-n) = (-1)^{m+n} conj(f̂(l,m,n))`.
pub fn random_real_so3<R: rand::Rng + ?Sized>(bandwidth: usize, channels: usize, rng: &mut R) -> SO3Spectrum {
    use rand_distr::{Distribution, StandardNormal};
    let mut s = SO3Spectrum::zeros(bandwidth, channels);
    for c in 0..channels {
        for l in 0..bandwidth {
            let li = l as i64;
            for m in -li..=li {
                for nn in -li..=li {
                    if (m, nn) < (-m, -nn) {
                        continue;
                    }
                    let re: f64 = StandardNormal.sample(rng);
                    if (m, nn) == (0, 0) {
                        s.set(c, l, 0, 0, Complex64::new(re, 0.0));
                        continue;
                    }
                    let im: f64 = StandardNormal.sample(rng);
                    let z = Complex64::new(re, im);
                    let sign = if (m + nn) % 2 == 0 { 1.0 } else { -1.0 };
                    s.set(c, l, m, nn, z);
                    s.set(c, l, -m, -nn, z.conj() * sign);
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_weights_sum_to_haar_volume() {
        for bw in 2..8 {
            let g = SO3Grid::new(bw).unwrap();
            let ones = vec![1.0; g.len()];
            assert!((g.integrate(&ones) - HAAR_VOLUME).abs() < 1e-9);
        }
    }

    #[test]
    fn coefficient_count_matches_block_sizes() {
        for bw in 1..10 {
            let sum: usize = (0..bw).map(|l: usize| (2 * l + 1).pow(2)).sum();
            assert_eq!(so3_coeff_count(bw), sum);
        }
    }

    #[test]
    fn degree_zero_synthesizes_a_constant() {
        let mut s = SO3Spectrum::zeros(3, 1);
        s.set(0, 0, 0, 0, Complex64::new(2.5, 0.0));
        let sig = so3_synthesize(&s, &SO3Grid::new(3).unwrap()).unwrap();
        assert!(sig.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn identity_sample_sums_the_diagonal() {
        // The grid has no exact identity point; evaluate at (0, 0, 0) directly.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_real_so3(3, 1, &mut rng);
        let want: Complex64 = (0..3)
            .flat_map(|l| {
                let li = l as i64;
                (-li..=li).map(move |m| (l, m))
            })
            .map(|(l, m)| s.get(0, l, m, m))
            .sum();
        let got = evaluate_so3(&s, 0, &Rotation::identity());
        assert!((want - got).norm() < 1e-12);
    }

    #[test]
    fn round_trip_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bw in [2, 4, 6] {
            let grid = SO3Grid::new(bw).unwrap();
            let spec = random_real_so3(bw, 2, &mut rng);
            let sig = so3_synthesize(&spec, &grid).unwrap();
            let back = so3_analyze(&sig, &grid).unwrap();
            for (a, b) in spec.coeffs().iter().zip(back.coeffs()) {
                assert!((a - b).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn fast_paths_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for bw in 2..=4 {
            let spec = random_real_so3(bw, 1, &mut rng);
            let t = SO3Transform::new(bw).unwrap();
            let fast = t.synth_complex(spec.channel(0));
            let slow = so3_synthesize_direct(&spec, 0);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10);
            }
            let values: Vec<f64> = slow.iter().enumerate().map(|(i, z)| z.re + (i % 5) as f64 * 0.1).collect();
            let sig = SO3Signal::from_values(bw, 1, values).unwrap();
            let a = t.analyze(&sig).unwrap();
            let b = so3_analyze_direct(&sig);
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                assert!((x - y).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = random_real_so3(4, 1, &mut rng);
        let grid = SO3Grid::new(4).unwrap();
        let sig = so3_synthesize(&spec, &grid).unwrap();
        let sq: Vec<f64> = sig.values().iter().map(|v| v * v).collect();
        assert!((grid.integrate(&sq) - spec.energy()).abs() < 1e-8 * spec.energy());
    }

    #[test]
    fn left_translation_matches_pointwise_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_real_so3(4, 1, &mut rng);
        let r = Rotation::random(12);
        let moved = rotate_so3(&spec, &r);
        for seed in 0..10 {
            let g = Rotation::random(100 + seed);
            let want = evaluate_so3(&spec, 0, &r.inverse().compose(&g));
            let got = evaluate_so3(&moved, 0, &g);
            assert!((want - got).norm() < 1e-9);
        }
    }

    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = SO3Transform::new(3).unwrap();
        let spec = random_real_so3(3, 1, &mut rng);
        let x: Vec<f64> = (0..216).map(|i| ((i * 53 % 17) as f64 - 8.0) / 5.0).collect();
        let ip_c = |a: &[Complex64], b: &[Complex64]| -> f64 {
            a.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum()
        };
        let ip_r = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };
        let lhs = ip_r(&t.synth_core(spec.channel(0)), &x);
        let rhs = ip_c(spec.channel(0), &t.synth_adjoint(&x));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let lhs = ip_c(&t.analyze_channel(&x), spec.channel(0));
        let rhs = ip_r(&x, &t.analyze_adjoint(spec.channel(0)));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn mismatched_bandwidth_is_a_shape_error() {
        let spec = SO3Spectrum::zeros(3, 1);
        assert!(matches!(
            so3_synthesize(&spec, &SO3Grid::new(4).unwrap()),
            Err(Error::Shape(_))
        ));
    }
}
