//! Counters that execute the production kernels on [`Counted`] values.

use crate::attention::{causal_swa, depth_residual_read, AttentionParams, Window, WindowSpec};
use crate::error::Result;
use crate::numerics::{Rng, Tensor};
use crate::stack::HiddenStack;

use super::counter::{count, Counted, FlopTally};
use super::flops::FlopBreakdown;

fn params(rng: &mut Rng, d: usize, dk: usize, dv: usize) -> Result<AttentionParams<Counted>> {
    AttentionParams::new(
        rng.uniform_tensor(&[d, dk], -0.5, 0.5),
        rng.uniform_tensor(&[d, dk], -0.5, 0.5),
        rng.uniform_tensor(&[d, dv], -0.5, 0.5),
        Some(rng.uniform_tensor(&[dv, d], -0.5, 0.5)),
    )
}

fn breakdown(t: FlopTally) -> FlopBreakdown {
    FlopBreakdown {
        projection: t.projection,
        score: t.score,
        value: t.value,
        output: t.output,
        softmax: t.softmax,
    }
}

/// Runs causal sliding-window attention over `T` random tokens and returns
/// what it executed, plus any operations outside the attention phases.
pub fn count_seq_shortswa(
    tokens: usize,
    w: Window,
    d: usize,
    dk: usize,
    dv: usize,
    seed: u64,
) -> Result<(FlopBreakdown, u64)> {
    let mut rng = Rng::new(seed);
    let x: Tensor<Counted> = rng.uniform_tensor(&[tokens, d], -1.0, 1.0);
    let p = params(&mut rng, d, dk, dv)?;
    let (out, tally) = count(|| causal_swa(&x, &p, WindowSpec::sequence(w)));
    out?;
    Ok((breakdown(tally), tally.other))
}

/// Executes the depth read at every `(t, ℓ)` for `ℓ = 0..L-1`.
pub fn count_depth_attn(
    tokens: usize,
    k: Window,
    blocks: usize,
    d: usize,
    dk: usize,
    dv: usize,
    seed: u64,
) -> Result<(FlopBreakdown, u64)> {
    let mut rng = Rng::new(seed);
    let h =
        HiddenStack::from_tensor(&rng.uniform_tensor::<Counted>(&[blocks, tokens, d], -1.0, 1.0))?;
    let p = params(&mut rng, d, dk, dv)?;
    let (out, tally) = count(|| -> Result<()> {
        for l in 0..blocks {
            for t in 0..tokens {
                depth_residual_read(&h, t, l, k, &p)?;
            }
        }
        Ok(())
    });
    out?;
    Ok((breakdown(tally), tally.other))
}
