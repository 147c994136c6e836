//! The one attention kernel both axes dispatch to.
//!
//! Order of operations for a query at index `i` over visible rows `lo..=i`:
//! scores `s_j = (q·k_j)·(1/sqrt(d_k))` with the dot product accumulated left
//! to right; stable softmax over `s_lo..s_i`; `z = Σ_j p_j v_j` accumulated
//! left to right over `j`. Everything between projection and output stays in
//! the accumulator type.

use std::ops::RangeInclusive;

use num_traits::{FromPrimitive, Zero};

use crate::error::Result;
use crate::numerics::ops::{matmul, softmax_in_place};
use crate::numerics::scalar::{dot_acc, Phase, Scalar};
use crate::numerics::Tensor;

use super::AttentionParams;

pub(crate) struct Projected<T> {
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
}

pub(crate) fn project<T: Scalar>(x: &Tensor<T>, p: &AttentionParams<T>) -> Result<Projected<T>> {
    T::mark_phase(Phase::Projection);
    Ok(Projected {
        q: matmul(x, &p.w_q)?,
        k: matmul(x, &p.w_k)?,
        v: matmul(x, &p.w_v)?,
    })
}

pub(crate) fn score_scale<T: Scalar>(key_width: usize) -> T::Acc {
    // computed outside the instrumented arithmetic
    T::Acc::from_f64(1.0 / (key_width as f64).sqrt()).expect("finite")
}

/// Attention of `query` over rows `range` of `keys` / `values`.
pub(crate) fn attend<T: Scalar>(
    query: &[T],
    keys: &Tensor<T>,
    values: &Tensor<T>,
    range: RangeInclusive<usize>,
    scale: T::Acc,
) -> Vec<T> {
    T::mark_phase(Phase::Score);
    let mut scores: Vec<T::Acc> = range
        .clone()
        .map(|j| dot_acc(query.iter().copied(), keys.row(j).iter().copied()))
        .collect();
    T::mark_phase(Phase::Softmax);
    for s in scores.iter_mut() {
        *s = *s * scale;
    }
    softmax_in_place(&mut scores);
    T::mark_phase(Phase::Value);
    let dv = values.width();
    let mut out = Vec::with_capacity(dv);
    for c in 0..dv {
        let mut acc = T::Acc::zero();
        for (p, j) in scores.iter().zip(range.clone()) {
            acc = acc + *p * values.row(j)[c].widen();
        }
        out.push(T::narrow(acc));
    }
    out
}

pub(crate) fn output<T: Scalar>(z: Tensor<T>, p: &AttentionParams<T>) -> Result<Tensor<T>> {
    match &p.w_o {
        Some(w_o) => {
            T::mark_phase(Phase::Output);
            let out = matmul(&z, w_o);
            T::mark_phase(Phase::Other);
            out
        }
        None => {
            T::mark_phase(Phase::Other);
            Ok(z)
        }
    }
}
