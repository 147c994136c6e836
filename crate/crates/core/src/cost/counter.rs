//! Operation-counting scalar.
//!
//! [`Counted`] wraps an `f64` and bumps a thread-local tally on every
//! arithmetic operation (`+ − × ÷`, `exp`, `sqrt`, …), attributed to the
//! phase most recently announced through [`Scalar::mark_phase`]. Sign flips,
//! `abs`, `min`/`max` and comparisons are free. Running the production
//! kernels on `Counted` values therefore counts exactly what they execute.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::numerics::{DType, Phase, Scalar};

/// Operation counts per kernel phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopTally {
    pub projection: u64,
    pub score: u64,
    pub value: u64,
    pub output: u64,
    pub softmax: u64,
    pub other: u64,
}

impl FlopTally {
    fn bump(&mut self, phase: Phase) {
        let slot = match phase {
            Phase::Projection => &mut self.projection,
            Phase::Score => &mut self.score,
            Phase::Value => &mut self.value,
            Phase::Output => &mut self.output,
            Phase::Softmax => &mut self.softmax,
            Phase::Other => &mut self.other,
        };
        *slot += 1;
    }
}

thread_local! {
    static TALLY: RefCell<FlopTally> = RefCell::new(FlopTally::default());
    static PHASE: Cell<Phase> = const { Cell::new(Phase::Other) };
}

fn tick() {
    let phase = PHASE.with(Cell::get);
    TALLY.with(|t| t.borrow_mut().bump(phase));
}

/// Runs `f` with a fresh tally and returns what it counted.
pub fn count<R>(f: impl FnOnce() -> R) -> (R, FlopTally) {
    let saved = TALLY.with(|t| std::mem::take(&mut *t.borrow_mut()));
    PHASE.with(|p| p.set(Phase::Other));
    let out = f();
    let tally = TALLY.with(|t| std::mem::replace(&mut *t.borrow_mut(), saved));
    PHASE.with(|p| p.set(Phase::Other));
    (out, tally)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd)]
pub struct Counted(pub f64);

impl fmt::Display for Counted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

macro_rules! counted_binop {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for Counted {
            type Output = Counted;
            #[inline]
            fn $m(self, rhs: Counted) -> Counted {
                tick();
                Counted(self.0 $op rhs.0)
            }
        }
    )*};
}
counted_binop!(Add add +, Sub sub -, Mul mul *, Div div /, Rem rem %);

impl Neg for Counted {
    type Output = Counted;
    fn neg(self) -> Counted {
        Counted(-self.0)
    }
}

impl Zero for Counted {
    fn zero() -> Self {
        Counted(0.0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

impl One for Counted {
    fn one() -> Self {
        Counted(1.0)
    }
}

impl Num for Counted {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Counted)
    }
}

impl ToPrimitive for Counted {
    fn to_i64(&self) -> Option<i64> {
        self.0.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.0)
    }
}

impl FromPrimitive for Counted {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Counted(n as f64))
    }
    fn from_u64(n: u64) -> Option<Self> {
        Some(Counted(n as f64))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Counted(n))
    }
}

impl NumCast for Counted {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Counted)
    }
}

macro_rules! free {
    ($($name:ident -> $ret:ty),*) => {$(
        fn $name(self) -> $ret { self.0.$name() }
    )*};
}

macro_rules! counted_unary {
    ($($name:ident),*) => {$(
        fn $name(self) -> Self { tick(); Counted(self.0.$name()) }
    )*};
}

macro_rules! constant {
    ($($name:ident),*) => {$(
        fn $name() -> Self { Counted(f64::$name()) }
    )*};
}

impl Float for Counted {
    constant!(
        nan,
        infinity,
        neg_infinity,
        neg_zero,
        min_value,
        min_positive_value,
        max_value
    );
    free!(is_nan -> bool, is_infinite -> bool, is_finite -> bool, is_normal -> bool,
          classify -> FpCategory, is_sign_positive -> bool, is_sign_negative -> bool,
          integer_decode -> (u64, i16, i8));
    counted_unary!(
        floor, ceil, round, trunc, fract, recip, sqrt, exp, exp2, ln, log2, log10, cbrt, sin, cos,
        tan, asin, acos, atan, exp_m1, ln_1p, sinh, cosh, tanh, asinh, acosh, atanh
    );

    fn abs(self) -> Self {
        Counted(self.0.abs())
    }
    fn signum(self) -> Self {
        Counted(self.0.signum())
    }
    fn max(self, other: Self) -> Self {
        Counted(self.0.max(other.0))
    }
    fn min(self, other: Self) -> Self {
        Counted(self.0.min(other.0))
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        tick();
        tick();
        Counted(self.0.mul_add(a.0, b.0))
    }
    fn powi(self, n: i32) -> Self {
        tick();
        Counted(self.0.powi(n))
    }
    fn powf(self, n: Self) -> Self {
        tick();
        Counted(self.0.powf(n.0))
    }
    fn log(self, base: Self) -> Self {
        tick();
        Counted(self.0.log(base.0))
    }
    #[allow(deprecated)]
    fn abs_sub(self, other: Self) -> Self {
        tick();
        Counted((self.0 - other.0).max(0.0))
    }
    fn hypot(self, other: Self) -> Self {
        tick();
        Counted(self.0.hypot(other.0))
    }
    fn atan2(self, other: Self) -> Self {
        tick();
        Counted(self.0.atan2(other.0))
    }
    fn sin_cos(self) -> (Self, Self) {
        tick();
        let (s, c) = self.0.sin_cos();
        (Counted(s), Counted(c))
    }
}

impl Scalar for Counted {
    type Acc = Counted;
    const DTYPE: DType = DType::Counted;

    fn widen(self) -> Counted {
        self
    }

    fn narrow(acc: Counted) -> Counted {
        acc
    }

    fn mark_phase(phase: Phase) {
        PHASE.with(|p| p.set(phase));
    }
}
