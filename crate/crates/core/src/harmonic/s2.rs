//! Spherical harmonic analysis and synthesis on the equiangular grid.
//!
//! `Y_l^m(θ, φ) = sqrt((2l+1)/4π) d^l_{m0}(θ) e^{imφ}` (Condon–Shortley phase included).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use super::quadrature::{azimuth_angles, polar_angles, polar_weights};
use super::wigner::{wigner_big_d, wigner_d_all};
use super::{check_imaginary, ZERO};
use crate::envelope;
use crate::error::{Error, Result};
use crate::geometry::{Point, Rotation};
use crate::sphere::SphericalSignal;

/// Number of `(l, m)` pairs below bandwidth `B`.
pub fn s2_coeff_count(bandwidth: usize) -> usize {
    bandwidth * bandwidth
}

/// Flat index of `(l, m)` within one channel: `l² + l + m`.
#[inline]
pub fn s2_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Complex spherical-harmonic coefficients, `[channel][l² + l + m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct S2Spectrum {
    bandwidth: usize,
    channels: usize,
    coeffs: Vec<Complex64>,
}

impl S2Spectrum {
    pub fn zeros(bandwidth: usize, channels: usize) -> Self {
        Self {
            bandwidth,
            channels,
            coeffs: vec![ZERO; channels * s2_coeff_count(bandwidth)],
        }
    }

    pub fn from_coeffs(bandwidth: usize, channels: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != channels * s2_coeff_count(bandwidth) {
            return Err(Error::Shape(format!(
                "{} coefficients for {channels} channels at bandwidth {bandwidth}",
                coeffs.len()
            )));
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
        let k = s2_coeff_count(self.bandwidth);
        &self.coeffs[c * k..(c + 1) * k]
    }

    pub fn get(&self, c: usize, l: usize, m: i64) -> Complex64 {
        self.coeffs[c * s2_coeff_count(self.bandwidth) + s2_index(l, m)]
    }

    pub fn set(&mut self, c: usize, l: usize, m: i64, v: Complex64) {
        let k = s2_coeff_count(self.bandwidth);
        self.coeffs[c * k + s2_index(l, m)] = v;
    }

    /// Largest violation of `f̂(l,-m) = (-1)^m conj(f̂(l,m))`; zero for real signals.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.channels {
            for l in 0..self.bandwidth {
                for m in 1..=l as i64 {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let d = self.get(c, l, -m) - self.get(c, l, m).conj() * sign;
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Envelope header `(B, C)`, body interleaved real and imaginary parts.
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

/// Precomputed tables for one bandwidth. Immutable; share through [`S2Transform::shared`].
#[derive(Debug)]
pub struct S2Transform {
    bandwidth: usize,
    /// Per-ring quadrature weight, polar weight times azimuthal spacing.
    ring_weights: Vec<f64>,
    /// `[ring][l² + l + m]` of `sqrt((2l+1)/4π) d^l_{m0}(θ_a)`.
    legendre: Vec<f64>,
    /// `[azimuth][m + B - 1]` of `e^{imφ_b}`.
    twiddle: Vec<Complex64>,
}

impl S2Transform {
    pub fn new(bandwidth: usize) -> Self {
        let k = s2_coeff_count(bandwidth);
        let dphi = 2.0 * PI / (2 * bandwidth) as f64;
        let ring_weights = polar_weights(bandwidth).iter().map(|w| w * dphi).collect();
        let mut legendre = Vec::with_capacity(2 * bandwidth * k);
        for theta in polar_angles(bandwidth) {
            let d = wigner_d_all(bandwidth, theta);
            for (l, dl) in d.iter().enumerate() {
                let w = 2 * l + 1;
                let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
                for r in 0..w {
                    // column m = 0 sits at index l
                    legendre.push(norm * dl[r * w + l]);
                }
            }
        }
        let span = 2 * bandwidth - 1;
        let mut twiddle = Vec::with_capacity(2 * bandwidth * span);
        for phi in azimuth_angles(bandwidth) {
            for j in 0..span {
                let m = j as f64 - (bandwidth as f64 - 1.0);
                twiddle.push(Complex64::from_polar(1.0, m * phi));
            }
        }
        Self {
            bandwidth,
            ring_weights,
            legendre,
            twiddle,
        }
    }

    /// Process-wide cached instance for `bandwidth`.
    pub fn shared(bandwidth: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<S2Transform>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry(bandwidth)
            .or_insert_with(|| Arc::new(Self::new(bandwidth)))
            .clone()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn ring_weights(&self) -> &[f64] {
        &self.ring_weights
    }

    fn grid_len(&self) -> usize {
        4 * self.bandwidth * self.bandwidth
    }

    /// `Σ_{a,b} w_a f(a,b) conj(Y(a,b))` for one channel with caller-chosen ring weights.
    pub fn forward_core(&self, values: &[f64], ring_weights: &[f64]) -> Vec<Complex64> {
        let bw = self.bandwidth;
        let n = 2 * bw;
        let span = 2 * bw - 1;
        let k = s2_coeff_count(bw);
        let mut out = vec![ZERO; k];
        let mut f_m = vec![ZERO; span];
        for a in 0..n {
            let row = &values[a * n..(a + 1) * n];
            for (j, slot) in f_m.iter_mut().enumerate() {
                let mut acc = ZERO;
                for (b, &v) in row.iter().enumerate() {
                    acc += self.twiddle[b * span + j].conj() * v;
                }
                *slot = acc;
            }
            let p = &self.legendre[a * k..(a + 1) * k];
            let wa = ring_weights[a];
            for l in 0..bw {
                let li = l as i64;
                for m in -li..=li {
                    let idx = s2_index(l, m);
                    out[idx] += f_m[(m + bw as i64 - 1) as usize] * (wa * p[idx]);
                }
            }
        }
        out
    }

    /// `Σ_{l,m} c(l,m) Y_l^m` at every grid point of one channel, complex.
    pub fn synth_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let bw = self.bandwidth;
        let n = 2 * bw;
        let span = 2 * bw - 1;
        let k = s2_coeff_count(bw);
        let mut out = vec![ZERO; self.grid_len()];
        let mut g_m = vec![ZERO; span];
        for a in 0..n {
            let p = &self.legendre[a * k..(a + 1) * k];
            g_m.iter_mut().for_each(|g| *g = ZERO);
            for l in 0..bw {
                let li = l as i64;
                for m in -li..=li {
                    let idx = s2_index(l, m);
                    g_m[(m + bw as i64 - 1) as usize] += coeffs[idx] * p[idx];
                }
            }
            for b in 0..n {
                let tw = &self.twiddle[b * span..(b + 1) * span];
                out[a * n + b] = g_m.iter().zip(tw).map(|(g, t)| g * t).sum();
            }
        }
        out
    }

    /// Real part of [`Self::synth_complex`].
    pub fn synth_core(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.synth_complex(coeffs).into_iter().map(|z| z.re).collect()
    }

    /// Quadrature analysis of one channel.
    pub fn analyze_channel(&self, values: &[f64]) -> Vec<Complex64> {
        self.forward_core(values, &self.ring_weights)
    }

    /// Adjoint of [`Self::analyze_channel`]: gradient with respect to grid values.
    pub fn analyze_adjoint(&self, grad: &[Complex64]) -> Vec<f64> {
        let n = 2 * self.bandwidth;
        let mut out = self.synth_core(grad);
        for (i, v) in out.iter_mut().enumerate() {
            *v *= self.ring_weights[i / n];
        }
        out
    }

    /// Adjoint of [`Self::synth_core`]: gradient with respect to coefficients.
    pub fn synth_adjoint(&self, grad: &[f64]) -> Vec<Complex64> {
        let ones = vec![1.0; 2 * self.bandwidth];
        self.forward_core(grad, &ones)
    }

    pub fn forward(&self, signal: &SphericalSignal) -> Result<S2Spectrum> {
        if signal.bandwidth() != self.bandwidth {
            return Err(Error::Shape(format!(
                "signal bandwidth {} but transform bandwidth {}",
                signal.bandwidth(),
                self.bandwidth
            )));
        }
        let coeffs = (0..signal.channels())
            .flat_map(|c| self.analyze_channel(signal.channel(c)))
            .collect();
        S2Spectrum::from_coeffs(self.bandwidth, signal.channels(), coeffs)
    }

    pub fn inverse(&self, spectrum: &S2Spectrum) -> Result<SphericalSignal> {
        if spectrum.bandwidth() != self.bandwidth {
            return Err(Error::Shape(format!(
                "spectrum bandwidth {} but grid bandwidth {}",
                spectrum.bandwidth(),
                self.bandwidth
            )));
        }
        let mut values = Vec::with_capacity(spectrum.channels() * self.grid_len());
        for c in 0..spectrum.channels() {
            let z = self.synth_complex(spectrum.channel(c));
            check_imaginary(&z)?;
            values.extend(z.into_iter().map(|z| z.re));
        }
        SphericalSignal::from_values(self.bandwidth, spectrum.channels(), values)
    }
}

pub fn sht_forward(signal: &SphericalSignal) -> Result<S2Spectrum> {
    S2Transform::shared(signal.bandwidth()).forward(signal)
}

/// Synthesis on the grid of bandwidth `grid_bandwidth`; mismatched spectra are rejected.
pub fn sht_inverse(spectrum: &S2Spectrum, grid_bandwidth: usize) -> Result<SphericalSignal> {
    S2Transform::shared(grid_bandwidth).inverse(spectrum)
}

/// `Y_l^m` at polar angle `theta` and azimuth `phi`.
pub fn spherical_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    let d = wigner_d_all(l + 1, theta).pop().expect("non-empty");
    let w = 2 * l + 1;
    let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
    Complex64::from_polar(norm * d[(m + l as i64) as usize * w + l], m as f64 * phi)
}

fn polar_of(dir: &Point) -> (f64, f64) {
    let r = dir.norm();
    let theta = (dir.z / r).clamp(-1.0, 1.0).acos();
    let phi = dir.y.atan2(dir.x);
    (theta, phi)
}

/// Value of one channel of the band-limited function at an arbitrary direction.
pub fn evaluate_s2(spectrum: &S2Spectrum, channel: usize, dir: &Point) -> Complex64 {
    let (theta, phi) = polar_of(dir);
    let d = wigner_d_all(spectrum.bandwidth(), theta);
    let coeffs = spectrum.channel(channel);
    let mut acc = ZERO;
    for (l, dl) in d.iter().enumerate() {
        let w = 2 * l + 1;
        let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
        let li = l as i64;
        for m in -li..=li {
            let y = Complex64::from_polar(norm * dl[(m + li) as usize * w + l], m as f64 * phi);
            acc += coeffs[s2_index(l, m)] * y;
        }
    }
    acc
}

/// Spectrum of `x ↦ f(R⁻¹x)`: each degree block multiplied by `D^l(R)`.
pub fn rotate_s2(spectrum: &S2Spectrum, rotation: &Rotation) -> S2Spectrum {
    let (alpha, beta, gamma) = rotation.to_euler_zyz();
    let mut out = S2Spectrum::zeros(spectrum.bandwidth(), spectrum.channels());
    for l in 0..spectrum.bandwidth() {
        let d = wigner_big_d(l, alpha, beta, gamma);
        let w = 2 * l + 1;
        let li = l as i64;
        for c in 0..spectrum.channels() {
            for mp in -li..=li {
                let mut acc = ZERO;
                for m in -li..=li {
                    acc += d[(mp + li) as usize * w + (m + li) as usize] * spectrum.get(c, l, m);
                }
                out.set(c, l, mp, acc);
            }
        }
    }
    out
}

/// Dense reference analysis, `O(B⁴)`, with harmonics evaluated point by point.
pub fn sht_forward_direct(signal: &SphericalSignal) -> S2Spectrum {
    let bw = signal.bandwidth();
    let n = 2 * bw;
    let thetas = polar_angles(bw);
    let phis = azimuth_angles(bw);
    let weights = polar_weights(bw);
    let dphi = 2.0 * PI / n as f64;
    let mut out = S2Spectrum::zeros(bw, signal.channels());
    for (a, &theta) in thetas.iter().enumerate() {
        for (b, &phi) in phis.iter().enumerate() {
            for l in 0..bw {
                let li = l as i64;
                for m in -li..=li {
                    let y = spherical_harmonic(l, m, theta, phi).conj();
                    for c in 0..signal.channels() {
                        let v = signal.channel(c)[a * n + b] * weights[a] * dphi;
                        let cur = out.get(c, l, m);
                        out.set(c, l, m, cur + y * v);
                    }
                }
            }
        }
    }
    out
}

/// Dense reference synthesis (complex values, one channel).
pub fn sht_inverse_direct(spectrum: &S2Spectrum, channel: usize) -> Vec<Complex64> {
    let bw = spectrum.bandwidth();
    let mut out = Vec::with_capacity(4 * bw * bw);
    for &theta in &polar_angles(bw) {
        for &phi in &azimuth_angles(bw) {
            let mut acc = ZERO;
            for l in 0..bw {
                let li = l as i64;
                for m in -li..=li {
                    acc += spectrum.get(channel, l, m) * spherical_harmonic(l, m, theta, phi);
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Random spectrum of a real band-limited function (conjugate-symmetric coefficients).
pub fn random_real_s2<R: rand::Rng + ?Sized>(bandwidth: usize, channels: usize, rng: &mut R) -> S2Spectrum {
    use rand_distr::{Distribution, StandardNormal};
    let mut s = S2Spectrum::zeros(bandwidth, channels);
    for c in 0..channels {
        for l in 0..bandwidth {
            let a: f64 = StandardNormal.sample(rng);
            s.set(c, l, 0, Complex64::new(a, 0.0));
            for m in 1..=l as i64 {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                let z = Complex64::new(re, im);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                s.set(c, l, m, z);
                s.set(c, l, -m, z.conj() * sign);
            }
        }
    }
    s
}
