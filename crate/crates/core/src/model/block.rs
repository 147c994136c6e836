//! Pre-norm block variants. Every residual add happens in storage precision,
//! in the order written.

use crate::attention::{causal_swa, depth_residual_read, AttentionParams, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::numerics::ops::{add, matmul, silu};
use crate::numerics::{rms_norm, Scalar, Tensor, RMS_EPS};
use crate::stack::HiddenStack;

use super::weights::{AttnSublayer, BlockWeights, MlpWeights};

fn eps<T: Scalar>() -> T {
    T::from_f64_lossy(RMS_EPS)
}

/// `Attn(Norm(x); window)` on the sequence axis.
pub fn attention_sublayer<T: Scalar>(
    x: &Tensor<T>,
    sub: &AttnSublayer<T>,
    window: Window,
) -> Result<Tensor<T>> {
    let normed = rms_norm(x, &sub.norm, eps())?;
    causal_swa(&normed, &sub.attn, WindowSpec::sequence(window))
}

/// `silu(x·W_in)·W_out`.
pub fn mlp<T: Scalar>(x: &Tensor<T>, w: &MlpWeights<T>) -> Result<Tensor<T>> {
    matmul(&silu(&matmul(x, &w.w_in)?), &w.w_out)
}

fn mlp_residual<T: Scalar>(u: &Tensor<T>, block: &BlockWeights<T>) -> Result<Tensor<T>> {
    add(u, &mlp(&rms_norm(u, &block.mlp_norm, eps())?, &block.mlp)?)
}

/// `U = H + Attn(Norm(H))`, `H' = U + MLP(Norm(U))` with full causal attention.
pub fn forward_block_standard<T: Scalar>(
    h: &Tensor<T>,
    block: &BlockWeights<T>,
) -> Result<Tensor<T>> {
    let u = add(h, &attention_sublayer(h, &block.global, Window::Full)?)?;
    mlp_residual(&u, block)
}

/// Local-to-global block:
/// `S = H + ShortSWA(Norm(H); w)`, `A = S + Attn(Norm(S))`, `H' = A + MLP(Norm(A))`.
pub fn forward_block_recommended<T: Scalar>(
    h: &Tensor<T>,
    block: &BlockWeights<T>,
    w: Window,
) -> Result<Tensor<T>> {
    let (tokens, _) = h.expect_matrix("forward_block_recommended")?;
    if let Window::Finite(v) = w {
        if v == 0 || v > tokens {
            return Err(Error::param("w", format!("{v} out of range 1..={tokens}")));
        }
    }
    let local = block
        .local
        .as_ref()
        .ok_or_else(|| Error::Config("block has no sliding-window sublayer".into()))?;
    let s = add(h, &attention_sublayer(h, local, w)?)?;
    let a = add(&s, &attention_sublayer(&s, &block.global, Window::Full)?)?;
    mlp_residual(&a, block)
}

/// `Z^(ℓ)[t] = z_t^(ℓ)` for every token.
pub fn depth_read_layer<T: Scalar>(
    h: &HiddenStack<T>,
    layer: usize,
    params: &AttentionParams<T>,
    k: Window,
) -> Result<Tensor<T>> {
    let rows = (0..h.tokens())
        .map(|t| depth_residual_read(h, t, layer, k, params).map(Tensor::into_data))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

/// Depth read at layer `ℓ`, added to `H^(ℓ)`, then the standard block.
pub fn forward_block_depth_attn<T: Scalar>(
    h: &HiddenStack<T>,
    layer: usize,
    block: &BlockWeights<T>,
    params: &AttentionParams<T>,
    k: Window,
) -> Result<Tensor<T>> {
    if layer >= h.depth() {
        return Err(Error::bounds("layer", layer, h.depth()));
    }
    let z = depth_read_layer(h, layer, params, k)?;
    forward_block_standard(&add(&h.layer(layer)?, &z)?, block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, MixerSpec, ModelConfig};
    use crate::numerics::ops::{sigmoid, vecmat};
    use crate::numerics::Rng;

    fn setup(
        mixer: MixerSpec,
        tokens: usize,
        d: usize,
        seed: u64,
    ) -> (ModelConfig, BlockWeights<f64>, Tensor<f64>) {
        let cfg = ModelConfig::new(1, tokens, d, mixer, seed);
        let mut rng = Rng::new(seed);
        let mut w = init_weights::<f64>(&cfg, &mut rng).unwrap();
        let x = rng.uniform_tensor(&[tokens, d], -1.0, 1.0);
        (cfg, w.blocks.remove(0), x)
    }

    #[test]
    fn zero_weights_are_identity() {
        let (cfg, b, x) = setup(
            MixerSpec::SeqShortswa {
                w: Window::Finite(2),
            },
            4,
            3,
            1,
        );
        let w = crate::model::ModelWeights {
            blocks: vec![b],
            depth_read: vec![],
        }
        .with_zero_matrices(&cfg)
        .unwrap();
        assert!(forward_block_standard(&x, &w.blocks[0]).unwrap().bit_eq(&x));
        assert!(
            forward_block_recommended(&x, &w.blocks[0], Window::Finite(2))
                .unwrap()
                .bit_eq(&x)
        );
    }

    #[test]
    fn single_token_hand_composition() {
        let (_, b, x) = setup(MixerSpec::Standard, 1, 2, 2);
        let norm = |v: &[f64], g: &[f64]| {
            let r = 1.0 / ((v[0] * v[0] + v[1] * v[1]) / 2.0 + 1e-6).sqrt();
            vec![g[0] * v[0] * r, g[1] * v[1] * r]
        };
        let h = x.data().to_vec();
        // self-only attention: softmax weight 1
        let a = norm(&h, b.global.norm.data());
        let attn = vecmat(
            &vecmat(&a, &b.global.attn.w_v).unwrap(),
            b.global.attn.w_o.as_ref().unwrap(),
        )
        .unwrap();
        let u: Vec<f64> = h.iter().zip(&attn).map(|(x, y)| x + y).collect();
        let m = norm(&u, b.mlp_norm.data());
        let hidden: Vec<f64> = vecmat(&m, &b.mlp.w_in)
            .unwrap()
            .into_iter()
            .map(|v| v * sigmoid(v))
            .collect();
        let out = vecmat(&hidden, &b.mlp.w_out).unwrap();
        let expect: Vec<f64> = u.iter().zip(&out).map(|(x, y)| x + y).collect();
        let got = forward_block_standard(&x, &b).unwrap();
        for (g, e) in got.data().iter().zip(&expect) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn causal_in_last_token() {
        let (_, b, x) = setup(MixerSpec::Standard, 5, 4, 3);
        let base = forward_block_standard(&x, &b).unwrap();
        let mut x2 = x.clone();
        x2.row_mut(4).iter_mut().for_each(|v| *v += 1.0);
        let y = forward_block_standard(&x2, &b).unwrap();
        for t in 0..4 {
            assert!(y
                .row(t)
                .iter()
                .zip(base.row(t))
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn recommended_with_zero_local_is_standard() {
        let (_, mut b, x) = setup(
            MixerSpec::SeqShortswa {
                w: Window::Finite(2),
            },
            4,
            4,
            4,
        );
        let local = b.local.as_mut().unwrap();
        local.attn = AttentionParams::zeros(4);
        let rec = forward_block_recommended(&x, &b, Window::Finite(2)).unwrap();
        assert!(rec.bit_eq(&forward_block_standard(&x, &b).unwrap()));
    }

    #[test]
    fn recommended_full_window_is_two_full_sublayers() {
        let (_, b, x) = setup(
            MixerSpec::SeqShortswa {
                w: Window::Finite(4),
            },
            4,
            4,
            5,
        );
        let rec = forward_block_recommended(&x, &b, Window::Finite(4)).unwrap();
        let local = b.local.as_ref().unwrap();
        let s = add(&x, &attention_sublayer(&x, local, Window::Full).unwrap()).unwrap();
        let oracle = forward_block_standard(&s, &b).unwrap();
        assert!(rec.bit_eq(&oracle));
    }

    #[test]
    fn window_range_errors() {
        let (_, b, x) = setup(
            MixerSpec::SeqShortswa {
                w: Window::Finite(2),
            },
            4,
            4,
            6,
        );
        assert!(matches!(
            forward_block_recommended(&x, &b, Window::Finite(5)),
            Err(Error::Parameter { .. })
        ));
        assert!(matches!(
            forward_block_recommended(&x, &b, Window::Finite(0)),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn depth_attn_with_zero_read_is_standard() {
        let (_, b, x) = setup(MixerSpec::Standard, 3, 4, 7);
        let mut h = HiddenStack::from_input(&x).unwrap();
        h.push(&forward_block_standard(&x, &b).unwrap()).unwrap();
        let zero = AttentionParams::zeros(4);
        let y = forward_block_depth_attn(&h, 1, &b, &zero, Window::Finite(2)).unwrap();
        assert!(y.bit_eq(&forward_block_standard(&h.layer(1).unwrap(), &b).unwrap()));
        assert!(matches!(
            forward_block_depth_attn(&h, 2, &b, &zero, Window::Full),
            Err(Error::Bounds { .. })
        ));
    }
}
