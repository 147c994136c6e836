//! Scalar abstraction shared by every kernel.
//!
//! All numeric code is generic over [`Scalar`]. Storage happens in `Self`,
//! contractions accumulate in [`Scalar::Acc`] (always the wide type for the
//! IEEE floats). The [`Scalar::mark_phase`] hook lets an instrumented scalar
//! attribute operations to the kernel phase that issued them; for `f32` and
//! `f64` it compiles to nothing.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Storage precision tag carried into reports and weight files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    /// 64-bit IEEE float ("wide precision"), the default.
    F64,
    /// 32-bit IEEE float ("standard precision").
    F32,
    /// Operation-counting scalar used for FLOP instrumentation.
    Counted,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::F64 => "f64",
            DType::F32 => "f32",
            DType::Counted => "counted",
        }
    }
}

impl Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Kernel phase an arithmetic operation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Input projections (queries, keys, values).
    Projection,
    /// Query-key dot products.
    Score,
    /// Probability-weighted value sums.
    Value,
    /// Output projection.
    Output,
    /// Score scaling and the softmax normalizer.
    Softmax,
    /// Everything else (norms, MLP, residual adds).
    Other,
}

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Accumulator used by contractions and softmax sums.
    type Acc: Float + FromPrimitive + Debug;

    const DTYPE: DType;

    fn widen(self) -> Self::Acc;
    fn narrow(acc: Self::Acc) -> Self;

    /// Attribute subsequent arithmetic to `phase`. No-op for plain floats.
    #[inline(always)]
    fn mark_phase(_phase: Phase) {}

    /// Lossless conversion from an `f64` drawn by the generator or read from disk.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    type Acc = f64;
    const DTYPE: DType = DType::F64;

    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }

    #[inline(always)]
    fn narrow(acc: f64) -> f64 {
        acc
    }
}

impl Scalar for f32 {
    type Acc = f64;
    const DTYPE: DType = DType::F32;

    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn narrow(acc: f64) -> f32 {
        acc as f32
    }
}

/// Left-to-right dot product accumulated in `T::Acc`, starting from zero.
///
/// This is the single contraction order used by matmul and by the attention
/// kernels; both duality paths go through it.
#[inline]
pub fn dot_acc<T: Scalar>(a: impl Iterator<Item = T>, b: impl Iterator<Item = T>) -> T::Acc {
    let mut acc = T::Acc::zero();
    for (x, y) in a.zip(b) {
        acc = acc + x.widen() * y.widen();
    }
    acc
}
