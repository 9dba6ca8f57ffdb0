//! Reverse-mode autodiff core over dense NCHW tensors.
//!
//! The element type is a construction-time parameter: `f32` for training and
//! inference, `f64` for the finite-difference gradient suites. Operations are
//! recorded on a [`Tape`]; [`Tape::backward`] replays them in reverse.

mod archive;
mod gradcheck;
mod kernels;
mod tape;

pub use archive::{load_archive, save_archive, ArchiveEntry};
pub use gradcheck::{grad_check, GradCheckReport};
pub use kernels::{conv2d_forward, conv2d_forward_direct, gemm};
pub use tape::{BnState, Tape, Var, WceTargets};

use crate::error::{Error, Result};
use rand::Rng;

/// Floating-point element of the compute core.
pub trait Scalar:
    Copy
    + Clone
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    fn max(self, other: Self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn is_finite(self) -> bool {
                self.is_finite()
            }
            #[inline]
            fn max(self, other: Self) -> Self {
                if self > other {
                    self
                } else {
                    other
                }
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Shape of a rank-4 tensor: (batch, channels, height, width).
pub type Shape4 = [usize; 4];

/// Dense rank-4 array, row-major over (n, c, h, w).
///
/// Tensors are plain values: cloning copies the data, and they move freely
/// between threads. Gradients live on the [`Tape`], not here.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Scalar> {
    pub shape: Shape4,
    pub data: Vec<E>,
}

impl<E: Scalar> Tensor<E> {
    pub fn zeros(shape: Shape4) -> Self {
        Tensor { shape, data: vec![E::ZERO; shape.iter().product()] }
    }

    pub fn filled(shape: Shape4, v: E) -> Self {
        Tensor { shape, data: vec![v; shape.iter().product()] }
    }

    pub fn from_vec(shape: Shape4, data: Vec<E>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::config(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Gaussian entries with the given standard deviation (Box-Muller).
    pub fn randn(shape: Shape4, std: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
            data.push(E::from_f64(r * c * std));
            if data.len() < n {
                data.push(E::from_f64(r * s * std));
            }
        }
        Tensor { shape, data }
    }

    /// Uniform entries in [lo, hi).
    pub fn rand_uniform(shape: Shape4, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| E::from_f64(rng.gen_range(lo..hi))).collect();
        Tensor { shape, data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> E {
        let [_, ch, h, w] = self.shape;
        self.data[((n * ch + c) * h + y) * w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut E {
        let [_, ch, h, w] = self.shape;
        &mut self.data[((n * ch + c) * h + y) * w + x]
    }

    /// A scalar tensor is shaped [1, 1, 1, 1].
    pub fn scalar(v: E) -> Self {
        Tensor { shape: [1, 1, 1, 1], data: vec![v] }
    }

    pub fn scalar_value(&self) -> Result<E> {
        if self.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::config(format!("expected scalar tensor, got shape {:?}", self.shape)))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.to_f64() as f32).collect()
    }

    pub fn from_f32_slice(shape: Shape4, data: &[f32]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| E::from_f64(v as f64)).collect())
    }
}

/// Geometry of a convolution or transposed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub fn new(stride: usize, padding: usize, dilation: usize) -> Result<Self> {
        if stride == 0 || dilation == 0 {
            return Err(Error::config("stride and dilation must be >= 1"));
        }
        Ok(ConvGeom { stride, padding, dilation })
    }

    pub fn unit() -> Self {
        ConvGeom { stride: 1, padding: 0, dilation: 1 }
    }

    /// Output extent of a forward convolution along one axis.
    pub fn conv_out(&self, input: usize, k: usize) -> Result<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span {
            return Err(Error::config(format!(
                "convolution input extent {input} too small for kernel span {span} at padding {}",
                self.padding
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }

    /// Output extent of a transposed convolution along one axis.
    pub fn deconv_out(&self, input: usize, k: usize, output_padding: usize) -> Result<usize> {
        if output_padding >= self.stride {
            return Err(Error::config(format!(
                "output_padding {output_padding} must be smaller than stride {}",
                self.stride
            )));
        }
        let v = (input - 1) * self.stride + self.dilation * (k - 1) + 1 + output_padding;
        if v < 2 * self.padding + 1 {
            return Err(Error::config("transposed convolution output collapses to zero"));
        }
        Ok(v - 2 * self.padding)
    }
}

/// Validate a convolution kernel shape against this crate's conventions:
/// square kernels of side 1 or 3.
pub fn validate_kernel(shape: Shape4) -> Result<()> {
    let [_, _, kh, kw] = shape;
    if kh != kw || !(kh == 1 || kh == 3) {
        return Err(Error::config(format!(
            "kernel must be square with side 1 or 3, got {kh}x{kw}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_arithmetic() {
        let g = ConvGeom::new(2, 1, 1).unwrap();
        assert_eq!(g.conv_out(256, 3).unwrap(), 128);
        let g = ConvGeom::new(2, 1, 1).unwrap();
        assert_eq!(g.deconv_out(8, 3, 1).unwrap(), 16);
        let g = ConvGeom::new(1, 1, 1).unwrap();
        assert_eq!(g.deconv_out(32, 3, 0).unwrap(), 32);
    }

    #[test]
    fn output_padding_must_be_below_stride() {
        let g = ConvGeom::new(2, 1, 1).unwrap();
        assert!(g.deconv_out(8, 3, 2).is_err());
    }

    #[test]
    fn randn_is_seed_deterministic() {
        let a = Tensor::<f32>::randn([1, 2, 3, 3], 0.5, &mut ChaCha8Rng::seed_from_u64(7));
        let b = Tensor::<f32>::randn([1, 2, 3, 3], 0.5, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }
}
