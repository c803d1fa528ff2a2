//! Band-limited harmonic analysis on S² and SO(3).
//!
//! Euler angles are ZYZ throughout: `R(α, β, γ) = Rz(α) Ry(β) Rz(γ)`.

pub mod quadrature;
mod s2;
mod so3;
mod wigner;

pub use s2::{
    evaluate_s2, random_real_s2, rotate_s2, s2_coeff_count, s2_index, sht_forward, sht_forward_direct,
    sht_inverse, sht_inverse_direct, spherical_harmonic, S2Spectrum, S2Transform,
};
pub use so3::{
    evaluate_so3, random_real_so3, rotate_so3, so3_analyze, so3_analyze_direct, so3_block_offset,
    so3_coeff_count, so3_index, so3_synthesize, so3_synthesize_direct, SO3Grid, SO3Signal, SO3Spectrum, HAAR_VOLUME,
    SO3Transform,
};
pub use wigner::{wigner_big_d, wigner_d, wigner_d_all};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest imaginary part tolerated when synthesizing a real signal.
pub const IMAG_TOL: f64 = 1e-9;

pub(crate) fn check_imaginary(values: &[Complex64]) -> Result<()> {
    let scale = values.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
    let worst = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if worst > IMAG_TOL * scale {
        return Err(Error::Numerical(format!(
            "synthesized signal has imaginary residue {worst:.3e}"
        )));
    }
    Ok(())
}
