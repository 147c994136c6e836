use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

use super::kernel::{attend, output, project, score_scale};
use super::{AttentionParams, WindowSpec};

/// Causal sliding-window attention over the rows of `x`.
///
/// Row `i` attends to rows `max(0, i−w+1)..=i` and never reads a later row.
/// The axis tag is descriptive only: the same code serves tokens and layers.
pub fn causal_swa<T: Scalar>(
    x: &Tensor<T>,
    params: &AttentionParams<T>,
    window: WindowSpec,
) -> Result<Tensor<T>> {
    let window = window.size.validate("window")?;
    params.validate()?;
    let (n, d) = x.expect_matrix("causal_swa")?;
    if d != params.model_width() {
        return Err(Error::dim("causal_swa", x.shape(), params.w_q.shape()));
    }
    let proj = project(x, params)?;
    let scale = score_scale::<T>(params.key_width());
    let mut z = Vec::with_capacity(n * params.value_width());
    for i in 0..n {
        z.extend(attend(
            proj.q.row(i),
            &proj.k,
            &proj.v,
            window.start(i)..=i,
            scale,
        ));
    }
    output(Tensor::new(&[n, params.value_width()], z)?, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{dense_masked_attention, Window};
    use crate::numerics::ops::{matmul, vecmat};
    use crate::numerics::Rng;

    fn setup(seed: u64, n: usize, d: usize) -> (Tensor<f64>, AttentionParams<f64>) {
        let mut rng = Rng::new(seed);
        let x = rng.uniform_tensor(&[n, d], -1.0, 1.0);
        (x, AttentionParams::random(&mut rng, d, -0.5, 0.5))
    }

    fn wv_wo(p: &AttentionParams<f64>, x: &[f64]) -> Vec<f64> {
        let v = vecmat(x, &p.w_v).unwrap();
        vecmat(&v, p.w_o.as_ref().unwrap()).unwrap()
    }

    #[test]
    fn singleton_window_is_value_projection() {
        let (x, p) = setup(1, 5, 3);
        let y = causal_swa(&x, &p, WindowSpec::sequence(Window::Finite(1))).unwrap();
        for i in 0..5 {
            let expect = wv_wo(&p, x.row(i));
            for (a, b) in y.row(i).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_position() {
        let (x, p) = setup(2, 1, 4);
        let y = causal_swa(&x, &p, WindowSpec::sequence(Window::Full)).unwrap();
        let expect = matmul(&matmul(&x, &p.w_v).unwrap(), p.w_o.as_ref().unwrap()).unwrap();
        assert!(y.max_abs_diff(&expect).unwrap() < 1e-15);
    }

    #[test]
    fn full_window_matches_dense_oracle() {
        let (x, p) = setup(7, 6, 4);
        let y = causal_swa(&x, &p, WindowSpec::sequence(Window::Full)).unwrap();
        let oracle = dense_masked_attention(&x, &p, Window::Full).unwrap();
        assert!(y.max_abs_diff(&oracle).unwrap() <= 1e-12);
    }

    #[test]
    fn oversized_window_equals_full_exactly() {
        let (x, p) = setup(8, 6, 4);
        let full = causal_swa(&x, &p, WindowSpec::sequence(Window::Full)).unwrap();
        for w in 6..9 {
            let y = causal_swa(&x, &p, WindowSpec::sequence(Window::Finite(w))).unwrap();
            assert!(y.bit_eq(&full));
        }
    }

    #[test]
    fn errors() {
        let (x, p) = setup(9, 3, 4);
        assert!(matches!(
            causal_swa(&x, &p, WindowSpec::sequence(Window::Finite(0))),
            Err(Error::Parameter { .. })
        ));
        let bad = Tensor::<f64>::zeros(&[3, 5]).unwrap();
        assert!(matches!(
            causal_swa(&bad, &p, WindowSpec::sequence(Window::Full)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn later_positions_never_leak() {
        let (x, p) = setup(10, 8, 4);
        let w = WindowSpec::sequence(Window::Finite(3));
        let base = causal_swa(&x, &p, w).unwrap();
        for j in 0..8 {
            let mut x2 = x.clone();
            for v in x2.row_mut(j) {
                *v += 0.75;
            }
            let y = causal_swa(&x2, &p, w).unwrap();
            for i in 0..j {
                assert_eq!(
                    y.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    base.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }
}
