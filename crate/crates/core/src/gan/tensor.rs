//! Minimal NCHW tensor used by the GAN networks.
//!
//! Generic over the scalar so training runs in f32 while the
//! finite-difference gradient suite instantiates f64.

use std::fmt::Debug;

use num_traits::Float;

use crate::rng::Rng;

/// Scalar for network parameters: f32 in production, f64 for gradient
/// verification.
pub trait Scalar:
    Float + num_traits::NumAssignOps + Send + Sync + Debug + Default + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense 4D tensor, NCHW layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: [usize; 4],
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>(), "shape mismatch");
        Tensor { shape, data }
    }

    /// Gaussian N(0, sigma^2) entries, deterministic per rng state.
    pub fn randn(shape: [usize; 4], sigma: f64, rng: &mut Rng) -> Self {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| T::from_f64(sigma * rng.normal()))
            .collect();
        Tensor { shape, data }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    /// Offset of plane (n, c).
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> usize {
        ((n * self.shape[1]) + c) * self.shape[2] * self.shape[3]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map_to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_offsets_walk_nchw() {
        let t = Tensor::<f64>::zeros([2, 3, 4, 5]);
        assert_eq!(t.plane(0, 0), 0);
        assert_eq!(t.plane(0, 1), 20);
        assert_eq!(t.plane(1, 0), 60);
        assert_eq!(t.numel(), 120);
    }

    #[test]
    fn randn_moments_and_determinism() {
        let mut rng = Rng::new(5);
        let t = Tensor::<f64>::randn([1, 1, 200, 200], 0.02, &mut rng);
        let n = t.numel() as f64;
        let mean: f64 = t.data.iter().sum::<f64>() / n;
        assert!(mean.abs() < 4.0 * 0.02 / n.sqrt(), "mean {mean}");
        let mut rng2 = Rng::new(5);
        let t2 = Tensor::<f64>::randn([1, 1, 200, 200], 0.02, &mut rng2);
        assert_eq!(t.data, t2.data);
    }
}
