//! Wigner small-d and big-D matrices.
//!
//! Convention: `d^l_{m'm}(β) = <l m'| exp(-i β J_y) |l m>` and
//! `D^l_{m'm}(α, β, γ) = exp(-i m' α) d^l_{m'm}(β) exp(-i m γ)` for `R = Rz(α) Ry(β) Rz(γ)`.
//! Matrices are stored row-major with rows indexed by `m' = -l..=l`.

use num_complex::Complex64;

fn ln_factorial(n: i64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Wigner's explicit sum. Used only for the recursion seeds, where `l = max(|m'|, |m|)`
/// leaves a single term.
fn explicit(l: i64, mp: i64, m: i64, beta: f64) -> f64 {
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let lo = 0.max(m - mp);
    let hi = (l + m).min(l - mp);
    let pref = 0.5
        * (ln_factorial(l + mp) + ln_factorial(l - mp) + ln_factorial(l + m) + ln_factorial(l - m));
    (lo..=hi)
        .map(|k| {
            let sign = if (mp - m + k) % 2 == 0 { 1.0 } else { -1.0 };
            let denom =
                ln_factorial(l + m - k) + ln_factorial(k) + ln_factorial(mp - m + k) + ln_factorial(l - mp - k);
            sign * (pref - denom).exp()
                * c.powi((2 * l + m - mp - 2 * k) as i32)
                * s.powi((mp - m + 2 * k) as i32)
        })
        .sum()
}

/// Small-d matrices `d^l(β)` for every `l < bandwidth`, by the three-term recursion in `l`.
pub fn wigner_d_all(bandwidth: usize, beta: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..bandwidth).map(|l| vec![0.0; (2 * l + 1).pow(2)]).collect();
    if bandwidth == 0 {
        return out;
    }
    let lmax = bandwidth as i64 - 1;
    let cb = beta.cos();
    for mp in -lmax..=lmax {
        for m in -lmax..=lmax {
            let start = mp.abs().max(m.abs());
            let mut prev = 0.0;
            let mut cur = explicit(start, mp, m, beta);
            let put = |out: &mut Vec<Vec<f64>>, l: i64, v: f64| {
                let w = (2 * l + 1) as usize;
                out[l as usize][(mp + l) as usize * w + (m + l) as usize] = v;
            };
            put(&mut out, start, cur);
            let (mpf, mf) = (mp as f64, m as f64);
            for j in start..lmax {
                let jf = j as f64;
                let j1 = jf + 1.0;
                let norm = ((j1 * j1 - mpf * mpf) * (j1 * j1 - mf * mf)).sqrt();
                let next = if j == 0 {
                    cb * cur
                } else {
                    let a = j1 * (2.0 * jf + 1.0) / norm * (cb - mpf * mf / (jf * j1));
                    let b = j1 * ((jf * jf - mpf * mpf) * (jf * jf - mf * mf)).sqrt() / (jf * norm);
                    a * cur - b * prev
                };
                prev = cur;
                cur = next;
                put(&mut out, j + 1, cur);
            }
        }
    }
    out
}

/// Small-d matrix `d^l(β)`, `(2l+1) x (2l+1)`, row-major.
pub fn wigner_d(l: usize, beta: f64) -> Vec<f64> {
    wigner_d_all(l + 1, beta).pop().expect("l + 1 > 0")
}

/// Big-D matrix `D^l(α, β, γ)`, row-major.
pub fn wigner_big_d(l: usize, alpha: f64, beta: f64, gamma: f64) -> Vec<Complex64> {
    let d = wigner_d(l, beta);
    let w = 2 * l + 1;
    let li = l as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); w * w];
    for (r, mp) in (-li..=li).enumerate() {
        for (c, m) in (-li..=li).enumerate() {
            let phase = -(mp as f64) * alpha - (m as f64) * gamma;
            out[r * w + c] = Complex64::from_polar(d[r * w + c], phase);
        }
    }
    out
}
