//! Minimal reverse-mode tape over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so creation order is a
//! topological order; the backward sweep walks it once in reverse.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numerics::ops::{self, sigmoid, softmax_in_place};
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Silu(usize),
    RmsNorm {
        x: usize,
        gain: usize,
        eps: T,
    },
    /// Causal windowed softmax over a square score matrix; `None` is the full prefix.
    WindowSoftmax {
        s: usize,
        window: Option<usize>,
    },
    GatherRow {
        sources: Vec<usize>,
        row: usize,
    },
    SelectRow {
        x: usize,
        row: usize,
    },
    ConcatRows(Vec<usize>),
    LinComb {
        sources: Vec<usize>,
        coeffs: Vec<T>,
    },
    Sum(usize),
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a.0, b.0), v))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = ops::transpose(self.value(a))?;
        Ok(self.push(Op::Transpose(a.0), v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add(a.0, b.0), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(Op::Mul(a.0, b.0), v))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = ops::scale(self.value(a), c);
        self.push(Op::Scale(a.0, c), v)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = ops::silu(self.value(a));
        self.push(Op::Silu(a.0), v)
    }

    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: T) -> Result<Var> {
        let v = ops::rms_norm(self.value(x), self.value(gain), eps)?;
        Ok(self.push(
            Op::RmsNorm {
                x: x.0,
                gain: gain.0,
                eps,
            },
            v,
        ))
    }

    /// Row `i` becomes a softmax over columns `max(0, i-w+1)..=i`; other
    /// columns are zero.
    pub fn window_softmax(&mut self, s: Var, window: Option<usize>) -> Result<Var> {
        let x = self.value(s);
        let (m, n) = x.expect_matrix("window_softmax")?;
        if m != n {
            return Err(Error::dim("window_softmax", x.shape(), &[m, m]));
        }
        if window == Some(0) {
            return Err(Error::param("window", "must be at least 1"));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let lo = window_start(i, window);
            let mut acc: Vec<T::Acc> = x.row(i)[lo..=i].iter().map(|v| v.widen()).collect();
            softmax_in_place(&mut acc);
            for (j, p) in (lo..=i).zip(acc) {
                out[i * n + j] = T::narrow(p);
            }
        }
        let v = Tensor::new(&[m, n], out)?;
        Ok(self.push(Op::WindowSoftmax { s: s.0, window }, v))
    }

    /// Stacks row `row` of each source matrix into a new matrix.
    pub fn gather_row(&mut self, sources: &[Var], row: usize) -> Result<Var> {
        let mut rows = Vec::with_capacity(sources.len());
        for &s in sources {
            let t = self.value(s);
            if row >= t.rows() {
                return Err(Error::bounds("row", row, t.rows()));
            }
            rows.push(t.row(row).to_vec());
        }
        let v = Tensor::from_rows(&rows)?;
        Ok(self.push(
            Op::GatherRow {
                sources: sources.iter().map(|s| s.0).collect(),
                row,
            },
            v,
        ))
    }

    pub fn select_row(&mut self, x: Var, row: usize) -> Result<Var> {
        let t = self.value(x);
        if row >= t.rows() {
            return Err(Error::bounds("row", row, t.rows()));
        }
        let v = Tensor::new(&[1, t.width()], t.row(row).to_vec())?;
        Ok(self.push(Op::SelectRow { x: x.0, row }, v))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mut rows = Vec::new();
        for &p in parts {
            rows.extend(self.value(p).iter_rows().map(<[T]>::to_vec));
        }
        let v = Tensor::from_rows(&rows)?;
        Ok(self.push(Op::ConcatRows(parts.iter().map(|p| p.0).collect()), v))
    }

    pub fn lin_comb(&mut self, sources: &[Var], coeffs: &[T]) -> Result<Var> {
        if sources.is_empty() || sources.len() != coeffs.len() {
            return Err(Error::dim("lin_comb", &[sources.len()], &[coeffs.len()]));
        }
        let mut acc = ops::scale(self.value(sources[0]), coeffs[0]);
        for (&s, &c) in sources.iter().zip(coeffs).skip(1) {
            acc = ops::add(&acc, &ops::scale(self.value(s), c))?;
        }
        Ok(self.push(
            Op::LinComb {
                sources: sources.iter().map(|s| s.0).collect(),
                coeffs: coeffs.to_vec(),
            },
            acc,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::zero(), |s, &v| s + v);
        self.push(Op::Sum(a.0), Tensor::vector(vec![s]).expect("scalar"))
    }

    /// Reverse sweep from a scalar `output`, returning the gradient for every node.
    fn backward(&self, output: Var) -> Result<Vec<Option<Tensor<T>>>> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::Contract(format!(
                "gradient requires a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::filled(out.shape(), T::one())?);
        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, id: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let val = |i: usize| &self.nodes[i].value;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, ops::matmul(g, &ops::transpose(val(*b))?)?)?;
                accumulate(grads, *b, ops::matmul(&ops::transpose(val(*a))?, g)?)?;
            }
            Op::Transpose(a) => accumulate(grads, *a, ops::transpose(g)?)?,
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, ops::hadamard(g, val(*b))?)?;
                accumulate(grads, *b, ops::hadamard(g, val(*a))?)?;
            }
            Op::Scale(a, c) => accumulate(grads, *a, ops::scale(g, *c))?,
            Op::Silu(a) => {
                let x = val(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, &gy)| {
                        let s = sigmoid(x);
                        gy * s * (T::one() + x * (T::one() - s))
                    })
                    .collect();
                accumulate(grads, *a, Tensor::new(x.shape(), data)?)?;
            }
            Op::RmsNorm { x, gain, eps } => {
                let (dx, dg) = rms_norm_backward(val(*x), val(*gain), *eps, g)?;
                accumulate(grads, *x, dx)?;
                accumulate(grads, *gain, dg)?;
            }
            Op::WindowSoftmax { s, window } => {
                let p = &self.nodes[id].value;
                let n = p.width();
                let mut ds = vec![T::zero(); p.len()];
                for i in 0..p.rows() {
                    let lo = window_start(i, *window);
                    let (pr, gr) = (p.row(i), g.row(i));
                    let inner = (lo..=i).fold(T::zero(), |acc, j| acc + pr[j] * gr[j]);
                    for j in lo..=i {
                        ds[i * n + j] = pr[j] * (gr[j] - inner);
                    }
                }
                accumulate(grads, *s, Tensor::new(p.shape(), ds)?)?;
            }
            Op::GatherRow { sources, row } => {
                for (r, &src) in sources.iter().enumerate() {
                    let mut d = Tensor::zeros(val(src).shape())?;
                    d.row_mut(*row).copy_from_slice(g.row(r));
                    accumulate(grads, src, d)?;
                }
            }
            Op::SelectRow { x, row } => {
                let mut d = Tensor::zeros(val(*x).shape())?;
                d.row_mut(*row).copy_from_slice(g.row(0));
                accumulate(grads, *x, d)?;
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = val(p).shape().to_vec();
                    let rows = val(p).rows();
                    let w = g.width();
                    let slice = g.data()[offset * w..(offset + rows) * w].to_vec();
                    accumulate(grads, p, Tensor::new(&shape, slice)?)?;
                    offset += rows;
                }
            }
            Op::LinComb { sources, coeffs } => {
                for (&s, &c) in sources.iter().zip(coeffs) {
                    accumulate(grads, s, ops::scale(g, c))?;
                }
            }
            Op::Sum(a) => {
                let shape = val(*a).shape();
                accumulate(grads, *a, Tensor::filled(shape, g.data()[0])?)?;
            }
        }
        Ok(())
    }
}

fn window_start(i: usize, window: Option<usize>) -> usize {
    match window {
        Some(w) => (i + 1).saturating_sub(w),
        None => 0,
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: usize, g: Tensor<T>) -> Result<()> {
    grads[id] = Some(match grads[id].take() {
        Some(prev) => ops::add(&prev, &g)?,
        None => g,
    });
    Ok(())
}

fn rms_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    eps: T,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = x.width();
    let dn = T::from_usize(d).expect("usize fits");
    let gn = gain.data();
    let mut dx = Vec::with_capacity(x.len());
    let mut dg = vec![T::zero(); d];
    for (row, gy) in x.iter_rows().zip(g.iter_rows()) {
        let ss = row.iter().fold(T::zero(), |s, &v| s + v * v);
        let r = T::one() / (ss / dn + eps).sqrt();
        let proj = (0..d).fold(T::zero(), |s, i| s + gn[i] * gy[i] * row[i]);
        for i in 0..d {
            dx.push(r * gn[i] * gy[i] - r.powi(3) * row[i] * proj / dn);
            dg[i] = dg[i] + gy[i] * row[i] * r;
        }
    }
    Ok((Tensor::new(x.shape(), dx)?, Tensor::new(gain.shape(), dg)?))
}

/// Gradients of the scalar `output` with respect to each of `inputs`.
/// Inputs the output does not depend on get a zero tensor.
pub fn grad<T: Scalar>(tape: &Tape<T>, output: Var, inputs: &[Var]) -> Result<Vec<Tensor<T>>> {
    let mut grads = tape.backward(output)?;
    inputs
        .iter()
        .map(|v| match grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => Ok(g),
            None => Tensor::zeros(tape.value(*v).shape()),
        })
        .collect()
}

/// Central finite-difference gradient of `f` at `x`, step `h`.
pub fn finite_difference<T: Scalar>(
    x: &Tensor<T>,
    h: T,
    mut f: impl FnMut(&Tensor<T>) -> T,
) -> Tensor<T> {
    let two = T::one() + T::one();
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (two * h));
    }
    Tensor::new(x.shape(), out).expect("same shape")
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn relative_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let norm = |it: &mut dyn Iterator<Item = f64>| it.map(|v| v * v).sum::<f64>().sqrt();
    let diff = norm(
        &mut a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x.as_f64() - y.as_f64()),
    );
    let scale = norm(&mut a.data().iter().map(|v| v.as_f64()))
        .max(norm(&mut b.data().iter().map(|v| v.as_f64())));
    if scale.is_zero() {
        diff
    } else {
        diff / scale
    }
}
