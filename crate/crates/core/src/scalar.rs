//! The scalar abstraction shared by every numeric component.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar the pipeline is generic over: `f32` or `f64`.
///
/// Random draws are always performed in `f64` and converted through
/// [`Scalar::of_f64`], so `f32` and `f64` instantiations consume identical
/// random streams.
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Serialize
    + DeserializeOwned
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Type tag recorded in file headers so loaders can reject mismatches.
    const DTYPE: &'static str;
    /// Width of the little-endian on-disk encoding.
    const BYTE_WIDTH: usize;

    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Little-endian byte encoding used by binary array files (bit-exact).
    fn write_le(self, out: &mut Vec<u8>);
    /// Inverse of [`Scalar::write_le`]; `bytes.len()` must equal `BYTE_WIDTH`.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    fn of_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 needs 4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    fn of_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 needs 8 bytes"))
    }
}
