//! Closed-form FLOP counts for the attention reads.
//!
//! Conventions: one multiply-add is 2 flops; a length-`n` dot product started
//! from zero costs `2n`. Score scaling and the softmax normalizer cost
//! [`SOFTMAX_OPS_PER_SCORE`] operations per visible score and are kept out of
//! the headline `score + value` term.

use serde::{Deserialize, Serialize};

use crate::attention::Window;
use crate::error::{Error, Result};

pub const FLOPS_PER_MULTIPLY_ADD: u64 = 2;
/// Scale, subtract max, exp, sum, divide.
pub const SOFTMAX_OPS_PER_SCORE: u64 = 5;

/// Constants every cost report embeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaConstants {
    pub flops_per_multiply_add: u64,
    pub softmax_ops_per_score: u64,
    pub headline: String,
}

pub fn constants() -> FormulaConstants {
    FormulaConstants {
        flops_per_multiply_add: FLOPS_PER_MULTIPLY_ADD,
        softmax_ops_per_score: SOFTMAX_OPS_PER_SCORE,
        headline: "score + value".into(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopBreakdown {
    pub projection: u64,
    pub score: u64,
    pub value: u64,
    pub output: u64,
    pub softmax: u64,
}

impl FlopBreakdown {
    /// `score + value`, the term that scales with the window.
    pub fn score_value(&self) -> u64 {
        self.score + self.value
    }

    pub fn total(&self) -> u64 {
        self.projection + self.score + self.value + self.output + self.softmax
    }
}

impl std::ops::Add for FlopBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            projection: self.projection + o.projection,
            score: self.score + o.score,
            value: self.value + o.value,
            output: self.output + o.output,
            softmax: self.softmax + o.softmax,
        }
    }
}

impl std::iter::Sum for FlopBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// `Σ_{i<n} min(w, i+1)` in closed form.
pub fn window_span_sum(n: u64, w: Window) -> u64 {
    let w = match w {
        Window::Finite(w) => (w as u64).min(n),
        Window::Full => n,
    };
    w * (w + 1) / 2 + (n - w) * w
}

fn positive(name: &'static str, v: usize) -> Result<u64> {
    if v == 0 {
        Err(Error::param(name, "must be at least 1"))
    } else {
        Ok(v as u64)
    }
}

/// Sliding-window attention over `T` tokens, window `w`:
/// projections `2T·d·(2d_k+d_v)`, scores `2·S·d_k`, values `2·S·d_v`,
/// output `2T·d_v·d`, softmax `5·S`, where `S = Σ_i min(w, i+1)`.
pub fn flops_seq_shortswa(
    tokens: usize,
    w: Window,
    d: usize,
    dk: usize,
    dv: usize,
) -> Result<FlopBreakdown> {
    let t = positive("T", tokens)?;
    let (d, dk, dv) = (
        positive("d", d)?,
        positive("d_k", dk)?,
        positive("d_v", dv)?,
    );
    match w.validate("w")? {
        Window::Finite(v) if v as u64 > t => {
            return Err(Error::param("w", format!("{v} exceeds T = {t}")));
        }
        _ => {}
    }
    let s = window_span_sum(t, w);
    Ok(FlopBreakdown {
        projection: 2 * t * d * (2 * dk + dv),
        score: 2 * s * dk,
        value: 2 * s * dv,
        output: 2 * t * dv * d,
        softmax: SOFTMAX_OPS_PER_SCORE * s,
    })
}

/// Depth read of block `ℓ` for one token, window `n = min(K, ℓ+1)`:
/// query `2d·d_k`, keys and values `2n·d·(d_k+d_v)`, scores `2n·d_k`,
/// values `2n·d_v`, output `2d_v·d`, softmax `5n`.
fn depth_read_flops(n: u64, d: u64, dk: u64, dv: u64) -> FlopBreakdown {
    FlopBreakdown {
        projection: 2 * d * dk + 2 * n * d * (dk + dv),
        score: 2 * n * dk,
        value: 2 * n * dv,
        output: 2 * dv * d,
        softmax: SOFTMAX_OPS_PER_SCORE * n,
    }
}

/// Depth-read cost of an `L`-block model: the read at every block
/// `ℓ = 0..L-1` for every one of `T` tokens. Returns the per-block counts.
pub fn flops_depth_attn_per_block(
    tokens: usize,
    k: Window,
    blocks: usize,
    d: usize,
    dk: usize,
    dv: usize,
) -> Result<Vec<FlopBreakdown>> {
    let t = positive("T", tokens)?;
    positive("L", blocks)?;
    let (d, dk, dv) = (
        positive("d", d)?,
        positive("d_k", dk)?,
        positive("d_v", dv)?,
    );
    let k = k.validate("K")?;
    Ok((0..blocks)
        .map(|l| {
            let per_token = depth_read_flops(k.span(l) as u64, d, dk, dv);
            FlopBreakdown {
                projection: t * per_token.projection,
                score: t * per_token.score,
                value: t * per_token.value,
                output: t * per_token.output,
                softmax: t * per_token.softmax,
            }
        })
        .collect())
}

/// Whole-model depth-read cost. The headline is `4·T·d·Σ_ℓ min(K, ℓ+1)` when
/// `d_k = d_v = d`; with `K = FULL` the sum is `L(L+1)/2`.
pub fn flops_depth_attn(
    tokens: usize,
    k: Window,
    blocks: usize,
    d: usize,
    dk: usize,
    dv: usize,
) -> Result<FlopBreakdown> {
    let per_block = flops_depth_attn_per_block(tokens, k, blocks, d, dk, dv)?;
    let t = tokens as u64;
    let n = window_span_sum(blocks as u64, k);
    let (d, dk, dv) = (d as u64, dk as u64, dv as u64);
    let closed = FlopBreakdown {
        projection: t * (2 * blocks as u64 * d * dk + 2 * n * d * (dk + dv)),
        score: t * 2 * n * dk,
        value: t * 2 * n * dv,
        output: t * blocks as u64 * 2 * dv * d,
        softmax: t * SOFTMAX_OPS_PER_SCORE * n,
    };
    debug_assert_eq!(closed, per_block.into_iter().sum());
    Ok(closed)
}

/// Two-matrix MLP over `T` tokens: `2·T·d·h` each way.
pub fn flops_mlp(tokens: usize, d: usize, hidden: usize) -> u64 {
    2 * FLOPS_PER_MULTIPLY_ADD * (tokens * d * hidden) as u64
}

/// Matrix work of one standard block (full attention plus MLP) over `T` tokens,
/// `d_k = d_v = d`. Used to price recomputation.
pub fn flops_standard_block(tokens: usize, d: usize, hidden: usize) -> Result<u64> {
    Ok(flops_seq_shortswa(tokens, Window::Full, d, d, d)?.total() + flops_mlp(tokens, d, hidden))
}
