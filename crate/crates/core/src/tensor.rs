//! Scalar abstraction and the NCHW tensor alias used by the layer library.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array4, ArrayView3, LinalgScalar, ScalarOperand};
use num_traits::{Float as NumFloat, FromPrimitive, ToPrimitive};

/// Activations and gradients, laid out as batch × channels × height × width.
pub type Tensor<F> = Array4<F>;

/// Floating-point element type of the layer library.
///
/// Training runs in `f32`; finite-difference gradient checks instantiate the
/// same graphs in `f64`.
pub trait Float:
    NumFloat
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;

    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;
}

impl Float for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Float for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Order-sensitive 64-bit FNV-1a over the bit patterns of a sequence of values.
#[derive(Debug, Clone, Copy)]
pub struct Checksum(u64);

impl Default for Checksum {
    fn default() -> Self {
        Checksum(0xcbf2_9ce4_8422_2325)
    }
}

impl Checksum {
    pub fn update_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn update<F: Float>(&mut self, values: impl IntoIterator<Item = F>) {
        let mut buf = Vec::with_capacity(8);
        for v in values {
            buf.clear();
            v.write_le(&mut buf);
            self.update_bytes(&buf);
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Copies one sample (C×H×W) into a freshly allocated batch of one.
pub fn batch_of_one<F: Float>(sample: ArrayView3<F>) -> Tensor<F> {
    sample.to_owned().insert_axis(ndarray::Axis(0))
}

pub fn cast<A: Float, B: Float>(t: &Tensor<A>) -> Tensor<B> {
    t.mapv(|v| B::lit(v.as_f64()))
}
