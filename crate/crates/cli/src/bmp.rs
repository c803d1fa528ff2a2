//! Uncompressed 24-bit BMP heat maps of spherical signals.

/// Black, red, yellow, white as `t` goes from 0 to 1.
fn hot(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let r = (3.0 * t).min(1.0);
    let g = (3.0 * t - 1.0).clamp(0.0, 1.0);
    let b = (3.0 * t - 2.0).clamp(0.0, 1.0);
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// Row-major `rows x cols` values, min-max scaled, each cell drawn as a `cell x cell` block.
/// The first row is at the top of the image.
pub fn heat_map(values: &[f64], rows: usize, cols: usize, cell: usize) -> Vec<u8> {
    assert_eq!(values.len(), rows * cols);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (cols * cell, rows * cell);
    let stride = (3 * w).div_ceil(4) * 4;
    let size = 54 + stride * h;
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(b"BM");
    out.extend_from_slice(&(size as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&54u32.to_le_bytes());
    out.extend_from_slice(&40u32.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&24u16.to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&((stride * h) as u32).to_le_bytes());
    out.extend_from_slice(&2835u32.to_le_bytes());
    out.extend_from_slice(&2835u32.to_le_bytes());
    out.extend_from_slice(&[0; 8]);
    // Pixel rows are stored bottom-up.
    for y in (0..h).rev() {
        let start = out.len();
        for x in 0..w {
            let [r, g, b] = hot((values[(y / cell) * cols + x / cell] - lo) / span);
            out.extend_from_slice(&[b, g, r]);
        }
        out.resize(start + stride, 0);
    }
    out
}
