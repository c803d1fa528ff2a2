//! Spectral S² and SO(3) correlation, their adjoints, and direct quadrature references.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Rotation;
use crate::harmonic::{
    evaluate_s2, evaluate_so3, s2_coeff_count, so3_block_offset, so3_coeff_count, S2Spectrum, S2Transform, SO3Grid,
    SO3Signal, SO3Spectrum, SO3Transform,
};
use crate::sphere::{make_grid, SphericalSignal};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Forward S² correlation of one sample.
///
/// `x` is `[c_in][4B²]`, `w` is `[c_in][c_out][B²]`. Returns the output grid values
/// `[c_out][8B³]` and the input spectra needed by the backward pass.
pub fn s2_correlate_core(
    s2: &S2Transform,
    so3: &SO3Transform,
    x: &[f64],
    w: &[Complex64],
    c_in: usize,
    c_out: usize,
) -> (Vec<f64>, Vec<Complex64>) {
    let bw = s2.bandwidth();
    let g = 4 * bw * bw;
    let k2 = s2_coeff_count(bw);
    let fhat: Vec<Complex64> = (0..c_in).flat_map(|ci| s2.analyze_channel(&x[ci * g..(ci + 1) * g])).collect();
    let h = s2_product(&fhat, w, bw, c_in, c_out);
    let k3 = so3_coeff_count(bw);
    let y = (0..c_out).flat_map(|co| so3.synth_core(&h[co * k3..(co + 1) * k3])).collect();
    debug_assert_eq!(fhat.len(), c_in * k2);
    (y, fhat)
}

/// `h[co](l,m,n) = Σ_ci conj(f̂[ci](l,m)) ŵ[ci,co](l,n)`.
pub fn s2_product(fhat: &[Complex64], w: &[Complex64], bw: usize, c_in: usize, c_out: usize) -> Vec<Complex64> {
    let k2 = s2_coeff_count(bw);
    let k3 = so3_coeff_count(bw);
    let mut h = vec![ZERO; c_out * k3];
    for co in 0..c_out {
        let hc = &mut h[co * k3..(co + 1) * k3];
        for ci in 0..c_in {
            let f = &fhat[ci * k2..(ci + 1) * k2];
            let wk = &w[(ci * c_out + co) * k2..(ci * c_out + co + 1) * k2];
            for l in 0..bw {
                let width = 2 * l + 1;
                let base2 = l * l;
                let base3 = so3_block_offset(l);
                for m in 0..width {
                    let fc = f[base2 + m].conj();
                    for n in 0..width {
                        hc[base3 + m * width + n] += fc * wk[base2 + n];
                    }
                }
            }
        }
    }
    h
}

/// Backward S² correlation of one sample: gradients of `x` and of the kernel spectra.
pub fn s2_correlate_backward(
    s2: &S2Transform,
    so3: &SO3Transform,
    fhat: &[Complex64],
    w: &[Complex64],
    gy: &[f64],
    c_in: usize,
    c_out: usize,
) -> (Vec<f64>, Vec<Complex64>) {
    let bw = s2.bandwidth();
    let k2 = s2_coeff_count(bw);
    let k3 = so3_coeff_count(bw);
    let n3 = 8 * bw * bw * bw;
    let gh: Vec<Complex64> = (0..c_out).flat_map(|co| so3.synth_adjoint(&gy[co * n3..(co + 1) * n3])).collect();
    let mut gf = vec![ZERO; c_in * k2];
    let mut gw = vec![ZERO; c_in * c_out * k2];
    for ci in 0..c_in {
        let f = &fhat[ci * k2..(ci + 1) * k2];
        for co in 0..c_out {
            let g = &gh[co * k3..(co + 1) * k3];
            let widx = (ci * c_out + co) * k2;
            for l in 0..bw {
                let width = 2 * l + 1;
                let base2 = l * l;
                let base3 = so3_block_offset(l);
                for m in 0..width {
                    for n in 0..width {
                        let gv = g[base3 + m * width + n];
                        gf[ci * k2 + base2 + m] += gv.conj() * w[widx + base2 + n];
                        gw[widx + base2 + n] += gv * f[base2 + m];
                    }
                }
            }
        }
    }
    let gx = (0..c_in).flat_map(|ci| s2.analyze_adjoint(&gf[ci * k2..(ci + 1) * k2])).collect();
    (gx, gw)
}

/// Forward SO(3) correlation of one sample. `w` is `[c_in][c_out][K]`.
pub fn so3_correlate_core(
    so3: &SO3Transform,
    x: &[f64],
    w: &[Complex64],
    c_in: usize,
    c_out: usize,
) -> (Vec<f64>, Vec<Complex64>) {
    let bw = so3.bandwidth();
    let n3 = 8 * bw * bw * bw;
    let k3 = so3_coeff_count(bw);
    let fhat: Vec<Complex64> = (0..c_in).flat_map(|ci| so3.analyze_channel(&x[ci * n3..(ci + 1) * n3])).collect();
    let h = so3_product(&fhat, w, bw, c_in, c_out);
    let y = (0..c_out).flat_map(|co| so3.synth_core(&h[co * k3..(co + 1) * k3])).collect();
    (y, fhat)
}

/// `h[co]_l = (8π²/(2l+1)) Σ_ci f̂[ci]_l ŵ[ci,co]_lᴴ`.
pub fn so3_product(fhat: &[Complex64], w: &[Complex64], bw: usize, c_in: usize, c_out: usize) -> Vec<Complex64> {
    let k3 = so3_coeff_count(bw);
    let mut h = vec![ZERO; c_out * k3];
    for co in 0..c_out {
        let hc = &mut h[co * k3..(co + 1) * k3];
        for ci in 0..c_in {
            let f = &fhat[ci * k3..(ci + 1) * k3];
            let wk = &w[(ci * c_out + co) * k3..(ci * c_out + co + 1) * k3];
            for l in 0..bw {
                let width = 2 * l + 1;
                let base = so3_block_offset(l);
                let s = crate::harmonic::HAAR_VOLUME / width as f64;
                for m in 0..width {
                    for n in 0..width {
                        let mut acc = ZERO;
                        for k in 0..width {
                            acc += f[base + m * width + k] * wk[base + n * width + k].conj();
                        }
                        hc[base + m * width + n] += acc * s;
                    }
                }
            }
        }
    }
    h
}

pub fn so3_correlate_backward(
    so3: &SO3Transform,
    fhat: &[Complex64],
    w: &[Complex64],
    gy: &[f64],
    c_in: usize,
    c_out: usize,
) -> (Vec<f64>, Vec<Complex64>) {
    let bw = so3.bandwidth();
    let k3 = so3_coeff_count(bw);
    let n3 = 8 * bw * bw * bw;
    let gh: Vec<Complex64> = (0..c_out).flat_map(|co| so3.synth_adjoint(&gy[co * n3..(co + 1) * n3])).collect();
    let mut gf = vec![ZERO; c_in * k3];
    let mut gw = vec![ZERO; c_in * c_out * k3];
    for ci in 0..c_in {
        let f = &fhat[ci * k3..(ci + 1) * k3];
        for co in 0..c_out {
            let g = &gh[co * k3..(co + 1) * k3];
            let widx = (ci * c_out + co) * k3;
            for l in 0..bw {
                let width = 2 * l + 1;
                let base = so3_block_offset(l);
                let s = crate::harmonic::HAAR_VOLUME / width as f64;
                for m in 0..width {
                    for n in 0..width {
                        let gv = g[base + m * width + n] * s;
                        let gvc = gv.conj();
                        for k in 0..width {
                            gf[ci * k3 + base + m * width + k] += gv * w[widx + base + n * width + k];
                            gw[widx + base + n * width + k] += gvc * f[base + m * width + k];
                        }
                    }
                }
            }
        }
    }
    let gx = (0..c_in).flat_map(|ci| so3.analyze_adjoint(&gf[ci * k3..(ci + 1) * k3])).collect();
    (gx, gw)
}

fn check_kernel_channels(found: usize, c_in: usize, c_out: usize) -> Result<()> {
    if found != c_in * c_out {
        return Err(Error::Shape(format!(
            "kernel has {found} channels, expected {c_in}×{c_out}"
        )));
    }
    Ok(())
}

/// `(f ⋆ w)(g) = ∫_{S²} f(x) w(g⁻¹x) dx` per output channel, summed over input channels.
/// Kernel channel `ci * c_out + co` holds `ŵ[ci, co]`.
pub fn s2_correlate(signal: &SphericalSignal, kernel: &S2Spectrum, c_in: usize, c_out: usize) -> Result<SO3Signal> {
    let bw = signal.bandwidth();
    if kernel.bandwidth() != bw {
        return Err(Error::Shape(format!(
            "signal bandwidth {bw} but kernel bandwidth {}",
            kernel.bandwidth()
        )));
    }
    if signal.channels() != c_in {
        return Err(Error::Shape(format!("signal has {} channels, expected {c_in}", signal.channels())));
    }
    check_kernel_channels(kernel.channels(), c_in, c_out)?;
    let s2 = S2Transform::shared(bw);
    let so3 = SO3Transform::shared(bw);
    let (y, _) = s2_correlate_core(&s2, &so3, signal.values(), kernel.coeffs(), c_in, c_out);
    SO3Signal::from_values(bw, c_out, y)
}

/// `(f ⋆ w)(g) = ∫_{SO(3)} f(h) w(g⁻¹h) dh` per output channel.
pub fn so3_correlate(signal: &SO3Signal, kernel: &SO3Spectrum, c_in: usize, c_out: usize) -> Result<SO3Signal> {
    let bw = signal.bandwidth();
    if kernel.bandwidth() != bw {
        return Err(Error::Shape(format!(
            "signal bandwidth {bw} but kernel bandwidth {}",
            kernel.bandwidth()
        )));
    }
    if signal.channels() != c_in {
        return Err(Error::Shape(format!("signal has {} channels, expected {c_in}", signal.channels())));
    }
    check_kernel_channels(kernel.channels(), c_in, c_out)?;
    let so3 = SO3Transform::shared(bw);
    let (y, _) = so3_correlate_core(&so3, signal.values(), kernel.coeffs(), c_in, c_out);
    SO3Signal::from_values(bw, c_out, y)
}

/// Direct quadrature of the S² correlation on the SO(3) grid, with the kernel evaluated
/// pointwise from its spectrum.
pub fn s2_correlate_direct(signal: &SphericalSignal, kernel: &S2Spectrum, c_in: usize, c_out: usize) -> Result<Vec<f64>> {
    let bw = signal.bandwidth();
    let sgrid = make_grid(bw)?;
    let ogrid = SO3Grid::new(bw)?;
    let n = 2 * bw;
    let mut out = vec![0.0; c_out * ogrid.len()];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let ginv = ogrid.rotation(a, b, c).inverse();
                let flat = (a * n + b) * n + c;
                for (j, x) in sgrid.directions().iter().enumerate() {
                    let moved = ginv.apply(x);
                    for ci in 0..c_in {
                        let fv = signal.channel(ci)[j] * sgrid.weights()[j];
                        for co in 0..c_out {
                            let wv = evaluate_s2(kernel, ci * c_out + co, &moved).re;
                            out[co * ogrid.len() + flat] += fv * wv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Direct Haar quadrature of the SO(3) correlation on the grid.
pub fn so3_correlate_direct(signal: &SO3Signal, kernel: &SO3Spectrum, c_in: usize, c_out: usize) -> Result<Vec<f64>> {
    let bw = signal.bandwidth();
    let grid = SO3Grid::new(bw)?;
    let n = 2 * bw;
    let rotations: Vec<Rotation> = (0..n)
        .flat_map(|a| (0..n).flat_map(move |b| (0..n).map(move |c| (a, b, c))))
        .map(|(a, b, c)| grid.rotation(a, b, c))
        .collect();
    let mut out = vec![0.0; c_out * grid.len()];
    for (gi, g) in rotations.iter().enumerate() {
        let ginv = g.inverse();
        for (hi, h) in rotations.iter().enumerate() {
            let rel = ginv.compose(h);
            let q = grid.weight(hi);
            for ci in 0..c_in {
                let fv = signal.channel(ci)[hi] * q;
                for co in 0..c_out {
                    out[co * grid.len() + gi] += fv * evaluate_so3(kernel, ci * c_out + co, &rel).re;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{random_real_s2, random_real_so3, rotate_s2, rotate_so3, sht_inverse, so3_analyze, so3_synthesize, HAAR_VOLUME};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn constants_correlate_to_a_constant() {
        let bw = 3;
        let c = 1.7;
        let w0 = 0.4;
        let f = SphericalSignal::from_values(bw, 1, vec![c; 36]).unwrap();
        let mut w = S2Spectrum::zeros(bw, 1);
        // w(x) = w0 everywhere
        w.set(0, 0, 0, Complex64::new(w0 * (4.0 * PI).sqrt(), 0.0));
        let out = s2_correlate(&f, &w, 1, 1).unwrap();
        for v in out.values() {
            assert!((v - c * 4.0 * PI * w0).abs() < 1e-9);
        }
    }

    #[test]
    fn s2_spectral_matches_direct_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bw in [2, 3, 4] {
            let f = sht_inverse(&random_real_s2(bw, 2, &mut rng), bw).unwrap();
            let w = random_real_s2(bw, 2 * 3, &mut rng);
            let fast = s2_correlate(&f, &w, 2, 3).unwrap();
            let slow = s2_correlate_direct(&f, &w, 2, 3).unwrap();
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-8, "bw {bw}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn y10_pattern_peaks_at_identity_aligned_rotations() {
        let bw = 4;
        let mut spec = S2Spectrum::zeros(bw, 1);
        spec.set(0, 1, 0, Complex64::new(1.0, 0.0));
        let f = sht_inverse(&spec, bw).unwrap();
        let out = s2_correlate(&f, &spec, 1, 1).unwrap();
        let grid = SO3Grid::new(bw).unwrap();
        let n = 2 * bw;
        let (best, _) = out
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        // Maximal where g maps the z axis closest to itself: smallest β.
        let b = (best / n) % n;
        assert_eq!(grid.betas()[b], grid.betas()[0]);
        let slow = s2_correlate_direct(&f, &spec, 1, 1).unwrap();
        for (a, b) in out.values().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn so3_spectral_matches_direct_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bw in [2, 3] {
            let grid = SO3Grid::new(bw).unwrap();
            let f = so3_synthesize(&random_real_so3(bw, 2, &mut rng), &grid).unwrap();
            let w = random_real_so3(bw, 2 * 2, &mut rng);
            let fast = so3_correlate(&f, &w, 2, 2).unwrap();
            let slow = so3_correlate_direct(&f, &w, 2, 2).unwrap();
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-8, "bw {bw}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn identity_kernel_reproduces_the_input() {
        // ŵ_l = (2l+1)/8π² I makes the block product the identity.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bw = 3;
        let grid = SO3Grid::new(bw).unwrap();
        let f = so3_synthesize(&random_real_so3(bw, 1, &mut rng), &grid).unwrap();
        let mut w = SO3Spectrum::zeros(bw, 1);
        for l in 0..bw {
            let li = l as i64;
            for m in -li..=li {
                w.set(0, l, m, m, Complex64::new((2 * l + 1) as f64 / HAAR_VOLUME, 0.0));
            }
        }
        let out = so3_correlate(&f, &w, 1, 1).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_input_gives_constant_times_kernel_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bw = 3;
        let f = SO3Signal::from_values(bw, 1, vec![2.0; 216]).unwrap();
        let w = random_real_so3(bw, 1, &mut rng);
        let out = so3_correlate(&f, &w, 1, 1).unwrap();
        let integral = HAAR_VOLUME * w.get(0, 0, 0, 0).re;
        for v in out.values() {
            assert!((v - 2.0 * integral).abs() < 1e-9);
        }
    }

    #[test]
    fn equivariance_at_bandwidth_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bw = 8;
        let grid = SO3Grid::new(bw).unwrap();
        let rot = Rotation::random(77);
        let fspec = random_real_s2(bw, 1, &mut rng);
        let w = random_real_s2(bw, 2, &mut rng);
        let f = sht_inverse(&fspec, bw).unwrap();
        let f_rot = sht_inverse(&rotate_s2(&fspec, &rot), bw).unwrap();
        let out = s2_correlate(&f, &w, 1, 2).unwrap();
        let out_rot = s2_correlate(&f_rot, &w, 1, 2).unwrap();
        let moved = so3_synthesize(&rotate_so3(&so3_analyze(&out, &grid).unwrap(), &rot), &grid).unwrap();
        assert!(rel_l2(out_rot.values(), moved.values()) < 1e-6);

        let w3 = random_real_so3(bw, 2, &mut rng);
        let g = so3_synthesize(&random_real_so3(bw, 1, &mut rng), &grid).unwrap();
        let g_spec = so3_analyze(&g, &grid).unwrap();
        let g_rot = so3_synthesize(&rotate_so3(&g_spec, &rot), &grid).unwrap();
        let a = so3_correlate(&g_rot, &w3, 1, 2).unwrap();
        let b = so3_synthesize(
            &rotate_so3(&so3_analyze(&so3_correlate(&g, &w3, 1, 2).unwrap(), &grid).unwrap(), &rot),
            &grid,
        )
        .unwrap();
        assert!(rel_l2(a.values(), b.values()) < 1e-6);
    }

    #[test]
    fn adjoints_match_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bw = 3;
        let s2 = S2Transform::new(bw);
        let so3 = SO3Transform::new(bw).unwrap();
        let (c_in, c_out) = (2, 2);
        let x: Vec<f64> = (0..c_in * 36).map(|i| (i as f64 * 0.31).sin()).collect();
        let w = random_real_s2(bw, c_in * c_out, &mut rng);
        let gy: Vec<f64> = (0..c_out * 216).map(|i| (i as f64 * 0.17).cos()).collect();
        let (y, fhat) = s2_correlate_core(&s2, &so3, &x, w.coeffs(), c_in, c_out);
        let (gx, gw) = s2_correlate_backward(&s2, &so3, &fhat, w.coeffs(), &gy, c_in, c_out);
        // Bilinear: <gy, y> = <gx, x> = Re<gw, w>.
        let lhs: f64 = gy.iter().zip(&y).map(|(a, b)| a * b).sum();
        let via_x: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let via_w: f64 = gw.iter().zip(w.coeffs()).map(|(a, b)| (a.conj() * b).re).sum();
        assert!((lhs - via_x).abs() < 1e-9 * lhs.abs().max(1.0));
        assert!((lhs - via_w).abs() < 1e-9 * lhs.abs().max(1.0));

        let x3: Vec<f64> = (0..c_in * 216).map(|i| (i as f64 * 0.13).sin()).collect();
        let w3 = random_real_so3(bw, c_in * c_out, &mut rng);
        let (y3, f3) = so3_correlate_core(&so3, &x3, w3.coeffs(), c_in, c_out);
        let (gx3, gw3) = so3_correlate_backward(&so3, &f3, w3.coeffs(), &gy, c_in, c_out);
        let lhs: f64 = gy.iter().zip(&y3).map(|(a, b)| a * b).sum();
        let via_x: f64 = gx3.iter().zip(&x3).map(|(a, b)| a * b).sum();
        let via_w: f64 = gw3.iter().zip(w3.coeffs()).map(|(a, b)| (a.conj() * b).re).sum();
        assert!((lhs - via_x).abs() < 1e-9 * lhs.abs().max(1.0));
        assert!((lhs - via_w).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn mismatched_bandwidths_are_rejected() {
        let f = SphericalSignal::zeros(3, 1);
        let w = S2Spectrum::zeros(4, 1);
        assert!(matches!(s2_correlate(&f, &w, 1, 1), Err(Error::Shape(_))));
    }
}
