use crate::error::{Error, Result};
use crate::numerics::ops::{matmul, softmax_rows, transpose};
use crate::numerics::{Scalar, Tensor};

use super::{AttentionParams, Window};

/// Reference route for causal windowed attention: materialize the full
/// `N × N` score matrix `QKᵀ/sqrt(d_k)`, set entries outside the causal window
/// to `-inf`, row-softmax, then `P·V·W_O`. Shares no code with the windowed
/// kernel beyond matmul and softmax.
pub fn dense_masked_attention<T: Scalar>(
    x: &Tensor<T>,
    params: &AttentionParams<T>,
    window: Window,
) -> Result<Tensor<T>> {
    let window = window.validate("window")?;
    params.validate()?;
    let (n, d) = x.expect_matrix("dense_masked_attention")?;
    if d != params.model_width() {
        return Err(Error::dim(
            "dense_masked_attention",
            x.shape(),
            params.w_q.shape(),
        ));
    }
    let q = matmul(x, &params.w_q)?;
    let k = matmul(x, &params.w_k)?;
    let v = matmul(x, &params.w_v)?;
    let mut scores = matmul(&q, &transpose(&k)?)?;
    let scale = T::from_f64_lossy(1.0 / (params.key_width() as f64).sqrt());
    for i in 0..n {
        let lo = window.start(i);
        for (j, s) in scores.row_mut(i).iter_mut().enumerate() {
            *s = if j < lo || j > i {
                T::neg_infinity()
            } else {
                *s * scale
            };
        }
    }
    let probs = softmax_rows(&scores)?;
    let z = matmul(&probs, &v)?;
    match &params.w_o {
        Some(w_o) => matmul(&z, w_o),
        None => Ok(z),
    }
}
