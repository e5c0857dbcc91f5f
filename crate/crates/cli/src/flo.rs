//! Middlebury `.flo` files.
//!
//! Layout: the bytes `PIEH`, width and height as little-endian `i32`, then
//! row-major interleaved `(u, v)` little-endian `f32` pairs.

use std::fs;
use std::path::Path;

use smokeflow_core::{FlowField, Grid};

pub const MAGIC: [u8; 4] = *b"PIEH";
const HEADER_LEN: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum FloError {
    #[error("not a flo file")]
    NotFlo,
    #[error("corrupt flo: {0}")]
    Corrupt(String),
    #[error("flow contains non-finite values")]
    NonFinite,
    #[error("flow is too large for the flo format")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serializes `v` with its components narrowed to `f32`. Values that do not
/// survive the narrowing as finite numbers are rejected.
pub fn encode(v: &FlowField) -> Result<Vec<u8>, FloError> {
    let (w, h) = v.dims();
    let (wi, hi) = match (i32::try_from(w), i32::try_from(h)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(FloError::TooLarge),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&wi.to_le_bytes());
    out.extend_from_slice(&hi.to_le_bytes());
    for (&u, &vv) in v.u().as_slice().iter().zip(v.v().as_slice()) {
        let (a, b) = (u as f32, vv as f32);
        if !a.is_finite() || !b.is_finite() {
            return Err(FloError::NonFinite);
        }
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<FlowField, FloError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(FloError::NotFlo);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FloError::Corrupt("truncated header".into()));
    }
    let word = |i: usize| i32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h) = (word(4), word(8));
    if w <= 0 || h <= 0 {
        return Err(FloError::Corrupt(format!("invalid dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| FloError::Corrupt("dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(FloError::Corrupt(format!(
            "expected {expected} bytes for {w}x{h}, found {}",
            bytes.len()
        )));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for pair in bytes[HEADER_LEN..].chunks_exact(8) {
        let a = f32::from_le_bytes(pair[..4].try_into().unwrap());
        let b = f32::from_le_bytes(pair[4..].try_into().unwrap());
        if !a.is_finite() || !b.is_finite() {
            return Err(FloError::Corrupt("non-finite sample".into()));
        }
        u.push(a as f64);
        v.push(b as f64);
    }
    let grid = |data| Grid::from_vec(w, h, data).map_err(|e| FloError::Corrupt(e.to_string()));
    FlowField::from_components(grid(u)?, grid(v)?).map_err(|e| FloError::Corrupt(e.to_string()))
}

pub fn write_flo(path: impl AsRef<Path>, v: &FlowField) -> Result<(), FloError> {
    fs::write(path, encode(v)?)?;
    Ok(())
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, FloError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokeflow_core::Vec2;

    #[test]
    fn one_pixel_layout() {
        let bytes = encode(&FlowField::zeros(1, 1)).unwrap();
        assert_eq!(
            bytes,
            [0x50, 0x49, 0x45, 0x48, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
        );
        // The magic read as a float is the conventional sanity value.
        assert_eq!(f32::from_le_bytes(MAGIC), 202021.25);
    }

    #[test]
    fn interleaves_row_major() {
        let v = FlowField::from_fn(2, 1, |x, _| Vec2::new(x as f64 + 1.0, -(x as f64) - 0.5));
        let b = encode(&v).unwrap();
        let f = |i: usize| f32::from_le_bytes(b[12 + 4 * i..16 + 4 * i].try_into().unwrap());
        assert_eq!([f(0), f(1), f(2), f(3)], [1.0, -0.5, 2.0, -1.5]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut b = encode(&FlowField::zeros(5, 7)).unwrap();
        assert!(matches!(decode(&b[..b.len() - 1]), Err(FloError::Corrupt(_))));
        assert!(matches!(decode(&b[..6]), Err(FloError::Corrupt(_))));
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode(&b), Err(FloError::NotFlo)));
        assert!(matches!(decode(b""), Err(FloError::NotFlo)));
    }

    #[test]
    fn rejects_non_finite_on_write() {
        let v = FlowField::constant(2, 2, Vec2::new(1e300, 0.0));
        assert!(matches!(encode(&v), Err(FloError::NonFinite)));
    }

    #[test]
    fn rejects_non_positive_dims() {
        let mut b = encode(&FlowField::zeros(1, 1)).unwrap();
        b[4..8].copy_from_slice(&0i32.to_le_bytes());
        assert!(matches!(decode(&b), Err(FloError::Corrupt(_))));
    }
}
