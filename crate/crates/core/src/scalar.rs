//! Scalar abstraction for the numeric core.
//!
//! Everything in this crate that does arithmetic is generic over [`Scalar`],
//! which is implemented for `f32` and `f64`. `f32` is the working precision
//! for training and evaluation; `f64` is used where high-precision checks
//! (e.g. finite-difference gradient verification) are wanted.

use ndarray::NdFloat;
use num_traits::FromPrimitive;
#[allow(unused_imports)]
use num_traits::ToPrimitive;

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar: NdFloat + FromPrimitive + std::iter::Sum + Default + 'static {
    /// Tag written into binary tensor containers ("f32" or "f64").
    const DTYPE: &'static str;

    /// Lossy conversion from `f64` (exact for in-range values when `Self = f64`).
    fn fd(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite f64 converts to scalar")
    }

    /// Widening conversion to `f64` (exact for `f32` and `f64`).
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Append the little-endian byte representation of `xs` to `out`.
    fn write_le(xs: &[Self], out: &mut Vec<u8>);

    /// Decode a little-endian byte buffer produced by [`Scalar::write_le`].
    /// Returns `None` when the buffer length is not a multiple of the scalar size.
    fn read_le(bytes: &[u8]) -> Option<Vec<Self>>;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    fn write_le(xs: &[Self], out: &mut Vec<u8>) {
        out.reserve(xs.len() * 4);
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8]) -> Option<Vec<Self>> {
        if bytes.len() % 4 != 0 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    fn write_le(xs: &[Self], out: &mut Vec<u8>) {
        out.reserve(xs.len() * 8);
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8]) -> Option<Vec<Self>> {
        if bytes.len() % 8 != 0 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn le_round_trip_f32() {
        let xs = vec![0.0f32, -1.5, 3.25e-7, f32::MAX];
        let mut buf = Vec::new();
        f32::write_le(&xs, &mut buf);
        assert_eq!(f32::read_le(&buf).unwrap(), xs);
    }

    #[test]
    fn le_round_trip_f64() {
        let xs = vec![0.0f64, -1.5, 3.25e-17, f64::MAX];
        let mut buf = Vec::new();
        f64::write_le(&xs, &mut buf);
        assert_eq!(f64::read_le(&buf).unwrap(), xs);
    }

    #[test]
    fn truncated_buffer_rejected() {
        assert!(f32::read_le(&[0u8; 3]).is_none());
        assert!(f64::read_le(&[0u8; 12]).is_none());
    }
}
