use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar, Tensor};

/// Projections for one single-head attention read. Row-vector convention:
/// `q = x·W_Q`, `k = x·W_K`, `v = x·W_V`, output `z·W_O`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    /// `d_v × d`; `None` is the identity (requires `d_v = d`).
    pub w_o: Option<Tensor<T>>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn new(
        w_q: Tensor<T>,
        w_k: Tensor<T>,
        w_v: Tensor<T>,
        w_o: Option<Tensor<T>>,
    ) -> Result<Self> {
        let p = Self { w_q, w_k, w_v, w_o };
        p.validate()?;
        Ok(p)
    }

    /// Random projections, `d_k = d_v = d`, entries uniform in `[lo, hi]`.
    pub fn random(rng: &mut Rng, d: usize, lo: f64, hi: f64) -> Self {
        Self {
            w_q: rng.uniform_tensor(&[d, d], lo, hi),
            w_k: rng.uniform_tensor(&[d, d], lo, hi),
            w_v: rng.uniform_tensor(&[d, d], lo, hi),
            w_o: Some(rng.uniform_tensor(&[d, d], lo, hi)),
        }
    }

    pub fn zeros(d: usize) -> Self {
        let z = || Tensor::zeros(&[d, d]).expect("d >= 1");
        Self {
            w_q: z(),
            w_k: z(),
            w_v: z(),
            w_o: Some(z()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, dk) = self.w_q.expect_matrix("W_Q")?;
        let (d2, dk2) = self.w_k.expect_matrix("W_K")?;
        let (d3, dv) = self.w_v.expect_matrix("W_V")?;
        if d2 != d || dk2 != dk {
            return Err(Error::dim("W_K vs W_Q", self.w_k.shape(), self.w_q.shape()));
        }
        if d3 != d {
            return Err(Error::dim("W_V vs W_Q", self.w_v.shape(), self.w_q.shape()));
        }
        match &self.w_o {
            Some(o) if o.shape() != [dv, d] => {
                return Err(Error::dim("W_O", o.shape(), &[dv, d]));
            }
            None if dv != d => {
                return Err(Error::dim("identity W_O", &[dv], &[d]));
            }
            _ => {}
        }
        let all = [
            Some(&self.w_q),
            Some(&self.w_k),
            Some(&self.w_v),
            self.w_o.as_ref(),
        ];
        if all.into_iter().flatten().any(|t| !t.is_finite()) {
            return Err(Error::Invariant(
                "attention parameters must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn model_width(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn key_width(&self) -> usize {
        self.w_q.shape()[1]
    }

    pub fn value_width(&self) -> usize {
        self.w_v.shape()[1]
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.w_q, &self.w_k, &self.w_v];
        v.extend(self.w_o.as_ref());
        v
    }

    pub fn cast<U: Scalar>(&self) -> AttentionParams<U> {
        AttentionParams {
            w_q: self.w_q.cast(),
            w_k: self.w_k.cast(),
            w_v: self.w_v.cast(),
            w_o: self.w_o.as_ref().map(Tensor::cast),
        }
    }
}
