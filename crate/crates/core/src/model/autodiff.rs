//! Tape-recorded forward pass mirroring [`forward_model`](super::forward_model),
//! used for gradient verification.

use crate::error::{Error, Result};
use crate::numerics::tape::{finite_difference, grad, relative_error, Tape, Var};
use crate::numerics::{Rng, Scalar, Tensor, RMS_EPS};

use super::config::{MixerSpec, ModelConfig};
use super::weights::{depth_read_sets, init_weights, ModelWeights};

#[derive(Clone, Copy)]
struct AttnVars {
    q: Var,
    k: Var,
    v: Var,
    o: Var,
}

#[derive(Clone, Copy)]
struct SubVars {
    norm: Var,
    attn: AttnVars,
}

struct BlockVars {
    local: Option<SubVars>,
    global: SubVars,
    mlp_norm: Var,
    w_in: Var,
    w_out: Var,
}

/// Splits the flat parameter list (declaration order) into block views.
fn unflatten(config: &ModelConfig, params: &[Var]) -> Result<(Vec<BlockVars>, Vec<AttnVars>)> {
    let mut it = params.iter().copied();
    let mut next = || {
        it.next()
            .ok_or_else(|| Error::Config("too few parameter variables".into()))
    };
    let attn = |next: &mut dyn FnMut() -> Result<Var>| -> Result<AttnVars> {
        Ok(AttnVars {
            q: next()?,
            k: next()?,
            v: next()?,
            o: next()?,
        })
    };
    let local = matches!(config.mixer, MixerSpec::SeqShortswa { .. });
    let mut blocks = Vec::new();
    for _ in 0..config.blocks {
        let local = if local {
            let norm = next()?;
            Some(SubVars {
                norm,
                attn: attn(&mut next)?,
            })
        } else {
            None
        };
        let norm = next()?;
        let global = SubVars {
            norm,
            attn: attn(&mut next)?,
        };
        blocks.push(BlockVars {
            local,
            global,
            mlp_norm: next()?,
            w_in: next()?,
            w_out: next()?,
        });
    }
    let depth = (0..depth_read_sets(config))
        .map(|_| attn(&mut next))
        .collect::<Result<Vec<_>>>()?;
    Ok((blocks, depth))
}

/// Dense masked attention over the rows of `x`.
fn attention<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: AttnVars,
    window: Option<usize>,
) -> Result<Var> {
    let q = tape.matmul(x, p.q)?;
    let k = tape.matmul(x, p.k)?;
    let v = tape.matmul(x, p.v)?;
    let kt = tape.transpose(k)?;
    let s = tape.matmul(q, kt)?;
    let dk = tape.value(p.q).shape()[1];
    let s = tape.scale(s, T::from_f64_lossy(1.0 / (dk as f64).sqrt()));
    let probs = tape.window_softmax(s, window)?;
    let z = tape.matmul(probs, v)?;
    tape.matmul(z, p.o)
}

fn sublayer<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    sub: SubVars,
    window: Option<usize>,
) -> Result<Var> {
    let n = tape.rms_norm(x, sub.norm, T::from_f64_lossy(RMS_EPS))?;
    let a = attention(tape, n, sub.attn, window)?;
    tape.add(x, a)
}

fn standard<T: Scalar>(tape: &mut Tape<T>, h: Var, b: &BlockVars) -> Result<Var> {
    let u = sublayer(tape, h, b.global, None)?;
    let n = tape.rms_norm(u, b.mlp_norm, T::from_f64_lossy(RMS_EPS))?;
    let hidden = tape.matmul(n, b.w_in)?;
    let act = tape.silu(hidden);
    let out = tape.matmul(act, b.w_out)?;
    tape.add(u, out)
}

fn coeffs<T: Scalar>(row: &[f64]) -> Vec<T> {
    row.iter().map(|&c| T::from_f64_lossy(c)).collect()
}

/// Records the whole model on `tape`; returns the variables of `H^(0..=L)`.
pub fn record_forward<T: Scalar>(
    tape: &mut Tape<T>,
    config: &ModelConfig,
    input: Var,
    params: &[Var],
) -> Result<Vec<Var>> {
    config.validate()?;
    let (blocks, depth) = unflatten(config, params)?;
    let mut states = vec![input];
    for (l, b) in blocks.iter().enumerate() {
        let h = states[l];
        let next = match &config.mixer {
            MixerSpec::Standard => standard(tape, h, b)?,
            MixerSpec::SeqShortswa { w } => {
                let local = b.local.expect("sliding-window sublayer recorded");
                let s = sublayer(tape, h, local, w.as_option())?;
                let a = sublayer(tape, s, b.global, None)?;
                let n = tape.rms_norm(a, b.mlp_norm, T::from_f64_lossy(RMS_EPS))?;
                let hidden = tape.matmul(n, b.w_in)?;
                let act = tape.silu(hidden);
                let out = tape.matmul(act, b.w_out)?;
                tape.add(a, out)?
            }
            MixerSpec::DepthAttn { k, .. } => {
                let p = if depth.len() == 1 { depth[0] } else { depth[l] };
                let lo = k.start(l);
                let mut rows = Vec::with_capacity(config.tokens);
                for t in 0..config.tokens {
                    let window = tape.gather_row(&states[lo..=l], t)?;
                    let a = attention(tape, window, p, None)?;
                    rows.push(tape.select_row(a, l - lo)?);
                }
                let z = tape.concat_rows(&rows)?;
                let injected = tape.add(h, z)?;
                standard(tape, injected, b)?
            }
            MixerSpec::Elc { weights } => {
                let mixed = tape.lin_comb(&states[..=l], &coeffs::<T>(&weights.rows[l]))?;
                standard(tape, mixed, b)?
            }
            MixerSpec::Denseformer { weights } => {
                let raw = standard(tape, h, b)?;
                let mut sources = states.clone();
                sources.push(raw);
                tape.lin_comb(&sources, &coeffs::<T>(&weights.rows[l + 1]))?
            }
        };
        states.push(next);
    }
    Ok(states)
}

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` over the input
    /// and every weight tensor.
    pub relative_error: f64,
    /// Largest per-tensor relative error, same metric.
    pub worst_tensor_error: f64,
    pub parameters: usize,
}

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Loss `Σ probe ⊙ H^(L) + ½ Σ (H^(L))²` on a random input, gradients w.r.t. the
/// input and every weight tensor.
pub fn gradient_check(config: &ModelConfig, seed: u64) -> Result<GradientCheck> {
    let mut rng = Rng::new(seed);
    let weights: ModelWeights<f64> = init_weights(config, &mut rng)?;
    let input: Tensor<f64> = rng.uniform_tensor(&[config.tokens, config.width], -1.0, 1.0);
    let probe: Tensor<f64> = rng.uniform_tensor(&[config.tokens, config.width], -1.0, 1.0);
    let mut values: Vec<Tensor<f64>> = vec![input];
    values.extend(weights.tensors().into_iter().cloned());

    let loss = |values: &[Tensor<f64>]| -> Result<(Tape<f64>, Var, Vec<Var>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.input(v.clone())).collect();
        let states = record_forward(&mut tape, config, vars[0], &vars[1..])?;
        let last = *states.last().expect("non-empty");
        let p = tape.input(probe.clone());
        let lin = tape.mul(last, p)?;
        let sq = tape.mul(last, last)?;
        let half = tape.scale(sq, 0.5);
        let total = tape.add(lin, half)?;
        let out = tape.sum(total);
        Ok((tape, out, vars))
    };

    let (tape, out, vars) = loss(&values)?;
    let analytic = grad(&tape, out, &vars)?;
    let mut numeric = Vec::with_capacity(values.len());
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let mut scratch = values.clone();
        let fd = finite_difference(&values[i], FD_STEP, |probe_val| {
            scratch[i] = probe_val.clone();
            let (tape, out, _) = loss(&scratch).expect("same shapes");
            tape.value(out).data()[0]
        });
        worst = worst.max(relative_error(&analytic[i], &fd));
        numeric.push(fd);
    }
    let flat = |ts: &[Tensor<f64>]| {
        let data: Vec<f64> = ts.iter().flat_map(|t| t.data().iter().copied()).collect();
        Tensor::vector(data).expect("non-empty")
    };
    Ok(GradientCheck {
        relative_error: relative_error(&flat(&analytic), &flat(&numeric)),
        worst_tensor_error: worst,
        parameters: values.iter().map(Tensor::len).sum(),
    })
}
