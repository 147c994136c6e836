//! Seeded generator for every random value in the crate.
//!
//! Algorithm: PCG-XSL-RR 128/64 (`rand_pcg::Pcg64`), seeded through
//! `SeedableRng::seed_from_u64`. Floats use the top 53 bits of one `u64`
//! draw: `u = (x >> 11) · 2⁻⁵³ ∈ [0, 1)`, then `lo + (hi − lo)·u`. Tensors are
//! filled in row-major order, one draw per element.

use rand_core::{RngCore, SeedableRng};
use rand_pcg::Pcg64;

use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

pub const ALGORITHM: &str = "pcg64-xsl-rr-128/64";

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: Pcg64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Pcg64::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        unit_from_bits(self.next_u64())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_unit()
    }

    pub fn uniform_tensor<T: Scalar>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64_lossy(self.uniform(lo, hi)))
            .collect();
        Tensor::new(shape, data).expect("valid shape")
    }
}

pub fn unit_from_bits(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let ta = Rng::new(9).uniform_tensor::<f64>(&[3, 4], -1.0, 1.0);
        let tb = Rng::new(9).uniform_tensor::<f64>(&[3, 4], -1.0, 1.0);
        assert!(ta.bit_eq(&tb));
    }

    #[test]
    fn different_seeds_differ() {
        assert_ne!(Rng::new(1).next_u64(), Rng::new(2).next_u64());
    }

    #[test]
    fn unit_range() {
        assert_eq!(unit_from_bits(0), 0.0);
        assert!(unit_from_bits(u64::MAX) < 1.0);
        let mut r = Rng::new(3);
        for _ in 0..1000 {
            let v = r.uniform(-0.1, 0.1);
            assert!((-0.1..0.1).contains(&v));
        }
    }
}
