use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::envelope;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::harmonic::quadrature::{azimuth_angles, polar_angles, polar_weights};

/// Equiangular `2B x 2B` grid of unit directions with Driscoll–Healy area weights.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    bandwidth: usize,
    thetas: Vec<f64>,
    phis: Vec<f64>,
    directions: Vec<Point>,
    weights: Vec<f64>,
}

impl SphereGrid {
    /// Polar rings `θ_a = π(2a+1)/(4B)` and azimuths `φ_b = 2πb/(2B)`.
    pub fn new(bandwidth: usize) -> Result<Self> {
        if bandwidth < 2 {
            return Err(Error::Config(format!("bandwidth must be at least 2, got {bandwidth}")));
        }
        let thetas = polar_angles(bandwidth);
        let phis = azimuth_angles(bandwidth);
        let ring = polar_weights(bandwidth);
        let dphi = 2.0 * PI / (2 * bandwidth) as f64;
        let mut directions = Vec::with_capacity(4 * bandwidth * bandwidth);
        let mut weights = Vec::with_capacity(4 * bandwidth * bandwidth);
        for (a, &t) in thetas.iter().enumerate() {
            for &p in &phis {
                directions.push(Point::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()));
                weights.push(ring[a] * dphi);
            }
        }
        Ok(Self {
            bandwidth,
            thetas,
            phis,
            directions,
            weights,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Number of grid points, `4B²`.
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    /// Unit directions, ring-major (`a * 2B + b`).
    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature of one channel of a grid signal.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

pub fn make_grid(bandwidth: usize) -> Result<SphereGrid> {
    SphereGrid::new(bandwidth)
}

/// Multi-channel real function sampled on a [`SphereGrid`]; values are `[channel][ring][azimuth]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalSignal {
    bandwidth: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SphericalSignal {
    pub fn zeros(bandwidth: usize, channels: usize) -> Self {
        Self {
            bandwidth,
            channels,
            values: vec![0.0; channels * 4 * bandwidth * bandwidth],
        }
    }

    pub fn from_values(bandwidth: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * 4 * bandwidth * bandwidth {
            return Err(Error::Shape(format!(
                "{} values for {channels} channels at bandwidth {bandwidth}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("spherical signal has non-finite values".into()));
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
        4 * self.bandwidth * self.bandwidth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid_len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid_len();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Binary envelope: `B`, `C` as little-endian u32, then the values as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        envelope::encode(self.bandwidth, self.channels, &self.values)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (b, c, values) = envelope::decode(bytes)?;
        Self::from_values(b, c, values)
    }

    /// `channel,ring,azimuth,theta,phi,value` rows for inspection.
    pub fn to_csv(&self) -> String {
        let thetas = polar_angles(self.bandwidth);
        let phis = azimuth_angles(self.bandwidth);
        let w = 2 * self.bandwidth;
        let mut out = String::from("channel,ring,azimuth,theta,phi,value\n");
        for c in 0..self.channels {
            for a in 0..w {
                for b in 0..w {
                    let v = self.channel(c)[a * w + b];
                    let _ = writeln!(out, "{c},{a},{b},{},{},{v}", thetas[a], phis[b]);
                }
            }
        }
        out
    }
}
