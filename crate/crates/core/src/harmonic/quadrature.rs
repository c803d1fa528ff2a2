use std::f64::consts::PI;

/// Polar sample angles `pi (2j + 1) / (4B)`, `j = 0..2B`.
pub fn polar_angles(bandwidth: usize) -> Vec<f64> {
    (0..2 * bandwidth)
        .map(|j| PI * (2 * j + 1) as f64 / (4 * bandwidth) as f64)
        .collect()
}

/// Azimuthal sample angles `2 pi j / (2B)`.
pub fn azimuth_angles(bandwidth: usize) -> Vec<f64> {
    (0..2 * bandwidth)
        .map(|j| 2.0 * PI * j as f64 / (2 * bandwidth) as f64)
        .collect()
}

/// Driscoll–Healy weights for `∫_0^pi g(θ) sin θ dθ` on [`polar_angles`].
///
/// Exact for polynomials in `cos θ` of degree below `2B`; the weights sum to 2.
pub fn polar_weights(bandwidth: usize) -> Vec<f64> {
    let b = bandwidth as f64;
    polar_angles(bandwidth)
        .iter()
        .enumerate()
        .map(|(j, theta)| {
            let s: f64 = (0..bandwidth)
                .map(|k| {
                    let odd = (2 * k + 1) as f64;
                    ((2 * j + 1) as f64 * odd * PI / (4.0 * b)).sin() / odd
                })
                .sum();
            (2.0 / b) * theta.sin() * s
        })
        .collect()
}
