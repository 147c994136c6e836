use crate::error::{Error, Result};
use crate::numerics::ops::{matmul, vecmat};
use crate::numerics::{Phase, Scalar, Tensor};
use crate::stack::HiddenStack;

use super::kernel::{attend, output, score_scale};
use super::{AttentionParams, Window};

/// The depth window `[h_t^(max(0,ℓ−K+1)); …; h_t^(ℓ)]`, `K_ℓ = min(K, ℓ+1)` rows.
pub fn depth_window<T: Scalar>(
    h: &HiddenStack<T>,
    token: usize,
    layer: usize,
    k: Window,
) -> Result<Tensor<T>> {
    let k = k.validate("K")?;
    if layer >= h.depth() {
        return Err(Error::bounds("layer", layer, h.depth()));
    }
    if token >= h.tokens() {
        return Err(Error::bounds("token", token, h.tokens()));
    }
    let rows = (k.start(layer)..=layer)
        .map(|j| h.state(j, token).map(<[T]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Depth-wise residual attention read `z_t^(ℓ)` for one token.
///
/// The query comes from `h_t^(ℓ)`; keys and values from the depth window.
/// Only the current state is projected to a query.
/// Layers above `ℓ` are never touched.
pub fn depth_residual_read<T: Scalar>(
    h: &HiddenStack<T>,
    token: usize,
    layer: usize,
    k: Window,
    params: &AttentionParams<T>,
) -> Result<Tensor<T>> {
    params.validate()?;
    if h.width() != params.model_width() {
        return Err(Error::dim(
            "depth_residual_read",
            &[h.width()],
            params.w_q.shape(),
        ));
    }
    let window = depth_window(h, token, layer, k)?;
    let last = window.rows() - 1;
    T::mark_phase(Phase::Projection);
    let query = vecmat(window.row(last), &params.w_q)?;
    let keys = matmul(&window, &params.w_k)?;
    let values = matmul(&window, &params.w_v)?;
    let z = attend(
        &query,
        &keys,
        &values,
        0..=last,
        score_scale::<T>(params.key_width()),
    );
    let z = output(Tensor::new(&[1, z.len()], z)?, params)?;
    Tensor::vector(z.into_data())
}
