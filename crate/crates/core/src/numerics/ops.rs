//! Dense kernels. Contractions run left to right over the contraction index
//! and accumulate in `T::Acc`; nothing broadcasts except trailing-axis vectors.

use num_traits::{Float, FromPrimitive, One};

use crate::error::{Error, Result};
use crate::numerics::scalar::{dot_acc, Scalar};
use crate::numerics::tensor::Tensor;

/// `c[i][j] = Σ_p a[i][p]·b[p][j]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.expect_matrix("matmul")?;
    let (k2, n) = b.expect_matrix("matmul")?;
    if k != k2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let bd = b.data();
    let mut out = Vec::with_capacity(m * n);
    for row in a.iter_rows() {
        for j in 0..n {
            let col = (0..k).map(|p| bd[p * n + j]);
            out.push(T::narrow(dot_acc(row.iter().copied(), col)));
        }
    }
    Tensor::new(&[m, n], out)
}

/// Row vector times matrix, same accumulation order as [`matmul`].
pub fn vecmat<T: Scalar>(x: &[T], w: &Tensor<T>) -> Result<Vec<T>> {
    let (k, n) = w.expect_matrix("vecmat")?;
    if x.len() != k {
        return Err(Error::dim("vecmat", &[x.len()], w.shape()));
    }
    let wd = w.data();
    Ok((0..n)
        .map(|j| T::narrow(dot_acc(x.iter().copied(), (0..k).map(|p| wd[p * n + j]))))
        .collect())
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = a.expect_matrix("transpose")?;
    let d = a.data();
    let data = (0..n)
        .flat_map(|j| (0..m).map(move |i| d[i * n + j]))
        .collect();
    Tensor::new(&[n, m], data)
}

fn zip_same<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape(), data)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_same("add", a, b, |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_same("sub", a, b, |x, y| x - y)
}

pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_same("hadamard", a, b, |x, y| x * y)
}

pub fn scale<T: Scalar>(a: &Tensor<T>, c: T) -> Tensor<T> {
    map(a, |x| x * c)
}

pub fn map<T: Scalar>(a: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(a.shape(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

pub fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `x·sigmoid(x)`, applied pointwise.
pub fn silu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    map(a, |x| x * sigmoid(x))
}

/// Stable softmax over a slice, in place: subtract the max, exponentiate,
/// normalize by the left-to-right sum.
pub fn softmax_in_place<A: Float>(xs: &mut [A]) {
    let mut m = A::neg_infinity();
    for &v in xs.iter() {
        if v > m {
            m = v;
        }
    }
    let mut sum = A::zero();
    for v in xs.iter_mut() {
        *v = (*v - m).exp();
        sum = sum + *v;
    }
    for v in xs.iter_mut() {
        *v = *v / sum;
    }
}

pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.expect_matrix("softmax_rows")?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.iter_rows() {
        let mut acc: Vec<T::Acc> = row.iter().map(|v| v.widen()).collect();
        softmax_in_place(&mut acc);
        out.extend(acc.into_iter().map(T::narrow));
    }
    Tensor::new(x.shape(), out)
}

/// Default normalizer epsilon.
pub const RMS_EPS: f64 = 1e-6;

/// `y_i = gain_i · x_i / sqrt(mean(x²) + eps)` over every trailing-axis vector.
pub fn rms_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let d = x.width();
    if gain.rank() != 1 || gain.len() != d {
        return Err(Error::dim("rms_norm", x.shape(), gain.shape()));
    }
    if eps.is_nan() || eps <= T::zero() {
        return Err(Error::param("eps", "must be positive"));
    }
    let g = gain.data();
    let mut out = Vec::with_capacity(x.len());
    for row in x.iter_rows() {
        let inv = rms_inverse(row, eps);
        out.extend(
            row.iter()
                .zip(g)
                .map(|(&v, &gi)| T::narrow(gi.widen() * v.widen() * inv)),
        );
    }
    Tensor::new(x.shape(), out)
}

/// `1 / sqrt(mean(x²) + eps)` in the accumulator type.
pub(crate) fn rms_inverse<T: Scalar>(row: &[T], eps: T) -> T::Acc {
    let ss = dot_acc(row.iter().copied(), row.iter().copied());
    let n = T::Acc::from_usize(row.len()).expect("usize fits");
    T::Acc::one() / (ss / n + eps.widen()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    /// Naive triple loop, written independently of `dot_acc`.
    fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[i * k + p] * b.data()[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::<f64>::identity(2).unwrap();
        let b = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(matmul(&i2, &b).unwrap(), b);
    }

    #[test]
    fn matmul_dot() {
        let c = matmul(&t(&[1, 2], &[1., 2.]), &t(&[2, 1], &[3., 4.])).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(5);
        let a = rng.uniform_tensor::<f64>(&[5, 4], -1.0, 1.0);
        let b = rng.uniform_tensor::<f64>(&[4, 3], -1.0, 1.0);
        assert_eq!(matmul(&a, &b).unwrap().data(), &naive_matmul(&a, &b)[..]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&t(&[2, 3], &[0.; 6]), &t(&[2, 2], &[0.; 4])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&t(&[1, 3], &[0., 0., 0.])).unwrap();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_rows(&t(&[1, 2], &[1000., 1000.])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&t(&[1, 2], &[0., 3f64.ln()])).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-15);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rms_norm_examples() {
        let ones = Tensor::<f64>::filled(&[4], 1.0).unwrap();
        let y = rms_norm(&t(&[4], &[1., 1., 1., 1.]), &ones, 1e-300).unwrap();
        assert_eq!(y.data(), &[1.0; 4]);

        let g = Tensor::<f64>::filled(&[2], 1.0).unwrap();
        let y = rms_norm(&t(&[2], &[3., 4.]), &g, 1e-300).unwrap();
        // hand computation: mean square 12.5
        assert!((y.data()[0] - 0.848_528_137_423_857).abs() < 1e-12);
        assert!((y.data()[1] - 1.131_370_849_898_476).abs() < 1e-12);

        let y = rms_norm(&t(&[2], &[0., 0.]), &g, 1e-6).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn rms_norm_errors() {
        let g = Tensor::<f64>::filled(&[3], 1.0).unwrap();
        assert!(matches!(
            rms_norm(&t(&[2], &[1., 2.]), &g, 1e-6),
            Err(Error::Dimension { .. })
        ));
        let g = Tensor::<f64>::filled(&[2], 1.0).unwrap();
        assert!(rms_norm(&t(&[2], &[1., 2.]), &g, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(row in proptest::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let n = row.len();
            let x = t(&[1, n], &row);
            let s = softmax_rows(&x).unwrap();
            let total: f64 = s.data().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(s.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
            let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
            let s2 = softmax_rows(&t(&[1, n], &shifted)).unwrap();
            prop_assert!(s.max_abs_diff(&s2).unwrap() <= 1e-12);
        }

        #[test]
        fn matmul_is_associative(seed in any::<u64>(), m in 1usize..5, k in 1usize..5, n in 1usize..5, p in 1usize..5) {
            let mut rng = Rng::new(seed);
            let a = rng.uniform_tensor::<f64>(&[m, k], -1.0, 1.0);
            let b = rng.uniform_tensor::<f64>(&[k, n], -1.0, 1.0);
            let c = rng.uniform_tensor::<f64>(&[n, p], -1.0, 1.0);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.data().iter().fold(1.0f64, |s, v| s.max(v.abs()));
            prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-10 * scale);
        }
    }
}
