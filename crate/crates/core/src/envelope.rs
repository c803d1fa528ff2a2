//! Flat binary envelope shared by signals, spectra and checkpoints:
//! two little-endian u32 header words followed by little-endian f64 values.

use crate::error::{Error, Result};

pub fn encode(a: usize, b: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * values.len());
    out.extend_from_slice(&(a as u32).to_le_bytes());
    out.extend_from_slice(&(b as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a whole buffer; the value count is implied by its length.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let (a, b, values, used) = decode_prefix(bytes, None)?;
    if used != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - used)));
    }
    Ok((a, b, values))
}

/// Decodes an envelope with a known value count from the front of `bytes`, returning the
/// number of bytes consumed.
pub fn decode_prefix(bytes: &[u8], count: Option<usize>) -> Result<(usize, usize, Vec<f64>, usize)> {
    if bytes.len() < 8 {
        return Err(Error::Format("envelope shorter than its header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (a, b) = (word(0), word(4));
    let body = &bytes[8..];
    let n = match count {
        Some(n) => n,
        None => {
            if body.len() % 8 != 0 {
                return Err(Error::Format("envelope body is not a whole number of f64 values".into()));
            }
            body.len() / 8
        }
    };
    if body.len() < 8 * n {
        return Err(Error::Format(format!("envelope truncated: need {n} values")));
    }
    let values = body[..8 * n]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((a, b, values, 8 + 8 * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let v = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300];
        let bytes = encode(3, 7, &v);
        let (a, b, w) = decode(&bytes).unwrap();
        assert_eq!((a, b), (3, 7));
        assert_eq!(
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            w.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_truncated_input() {
        assert!(decode(&[1, 2, 3]).is_err());
        let mut bytes = encode(1, 1, &[1.0]);
        bytes.pop();
        assert!(decode(&bytes).is_err());
    }
}
