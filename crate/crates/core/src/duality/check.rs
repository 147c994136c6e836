use std::time::Instant;

use crate::attention::{
    causal_swa, dense_masked_attention, depth_residual_read, AttentionParams, Window, WindowSpec,
};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::stack::HiddenStack;

use super::report::{CheckMode, DualityConfig, DualityReport, StackSource};

/// `X_t = [h_t^(0); …; h_t^(L)]`, a pure gather.
pub fn extract_trajectory<T: Scalar>(h: &HiddenStack<T>, token: usize) -> Result<Tensor<T>> {
    if token >= h.tokens() {
        return Err(Error::bounds("token", token, h.tokens()));
    }
    let rows = (0..h.depth())
        .map(|l| h.state(l, token).map(<[T]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Inverse of [`extract_trajectory`]: writes `x` back as token `t`'s states.
pub fn scatter_trajectory<T: Scalar>(
    h: &mut HiddenStack<T>,
    token: usize,
    x: &Tensor<T>,
) -> Result<()> {
    if x.shape() != [h.depth(), h.width()] {
        return Err(Error::dim(
            "scatter_trajectory",
            x.shape(),
            &[h.depth(), h.width()],
        ));
    }
    for l in 0..h.depth() {
        h.state_mut(l, token)?.copy_from_slice(x.row(l));
    }
    Ok(())
}

fn cell_diff<T: Scalar>(a: &[T], b: &[T]) -> (f64, bool) {
    let mut max = 0.0f64;
    let mut exact = true;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_f64(), y.as_f64());
        max = max.max((x - y).abs());
        exact &= x.to_bits() == y.to_bits();
    }
    (max, exact)
}

/// Compares `z_t^(ℓ)` from the depth read against row `ℓ` of windowed
/// attention over the trajectory `X_t`, for every `(t, ℓ)`.
///
/// `BitExact` uses the sliding-window route (same kernel); `Tolerance` uses
/// the dense masked oracle.
pub fn check_duality<T: Scalar>(
    h: &HiddenStack<T>,
    params: &AttentionParams<T>,
    k: Window,
    mode: CheckMode,
) -> Result<DualityReport> {
    let start = Instant::now();
    let k = k.validate("K")?;
    params.validate()?;
    if let CheckMode::Tolerance { eps } = mode {
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::param("eps", "tolerance must be nonnegative"));
        }
    }
    let mut cells = Vec::with_capacity(h.tokens());
    let mut exact = true;
    for t in 0..h.tokens() {
        let traj = extract_trajectory(h, t)?;
        let reference = match mode {
            CheckMode::BitExact => causal_swa(&traj, params, WindowSpec::depth(k))?,
            CheckMode::Tolerance { .. } => dense_masked_attention(&traj, params, k)?,
        };
        let mut row = Vec::with_capacity(h.depth());
        for l in 0..h.depth() {
            let z = depth_residual_read(h, t, l, k, params)?;
            let (diff, same) = cell_diff(z.data(), reference.row(l));
            exact &= same;
            row.push(diff);
        }
        cells.push(row);
    }
    Ok(finish(h, k, mode, cells, exact, start))
}

/// Depth read with `K = FULL` against dense causal attention over the
/// explicit `(L+1) × (L+1)` masked score matrix of each trajectory.
pub fn check_full_window_limit<T: Scalar>(
    h: &HiddenStack<T>,
    params: &AttentionParams<T>,
) -> Result<DualityReport> {
    check_duality(h, params, Window::Full, CheckMode::tolerance_for(T::DTYPE))
}

fn finish<T: Scalar>(
    h: &HiddenStack<T>,
    k: Window,
    mode: CheckMode,
    cells: Vec<Vec<f64>>,
    exact: bool,
    start: Instant,
) -> DualityReport {
    let global = cells.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let passed = match mode {
        CheckMode::BitExact => exact,
        CheckMode::Tolerance { eps } => global <= eps,
    };
    DualityReport {
        config: DualityConfig {
            blocks: h.blocks(),
            tokens: h.tokens(),
            width: h.width(),
            source: StackSource::External,
        },
        k,
        mode,
        cell_max_abs_diff: cells,
        global_max_abs_diff: global,
        exact,
        passed,
        dtype: T::DTYPE,
        seed: None,
        elapsed_ms: Some(start.elapsed().as_secs_f64() * 1e3),
    }
}
