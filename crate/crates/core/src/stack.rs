use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// The `(L+1) × T × d` stack of layer states. Slice 0 is the input stream,
/// slice `ℓ ≥ 1` the output of block `ℓ-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStack<T> {
    tokens: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> HiddenStack<T> {
    pub fn from_input(input: &Tensor<T>) -> Result<Self> {
        let (tokens, width) = input.expect_matrix("hidden stack input")?;
        check_finite(input, 0)?;
        Ok(Self {
            tokens,
            width,
            data: input.data().to_vec(),
        })
    }

    /// Wraps a rank-3 `(L+1) × T × d` tensor.
    pub fn from_tensor(states: &Tensor<T>) -> Result<Self> {
        let [layers, tokens, width] = states.shape()[..] else {
            return Err(Error::dim("hidden stack", states.shape(), &[0, 0, 0]));
        };
        let stack = Self {
            tokens,
            width,
            data: states.data().to_vec(),
        };
        for l in 0..layers {
            check_finite(&stack.layer(l)?, l)?;
        }
        Ok(stack)
    }

    pub fn push(&mut self, layer: &Tensor<T>) -> Result<()> {
        if layer.shape() != [self.tokens, self.width] {
            return Err(Error::dim(
                "hidden stack push",
                layer.shape(),
                &[self.tokens, self.width],
            ));
        }
        check_finite(layer, self.depth())?;
        self.data.extend_from_slice(layer.data());
        Ok(())
    }

    /// Number of stored layer states, `L + 1`.
    pub fn depth(&self) -> usize {
        self.data.len() / (self.tokens * self.width)
    }

    /// Number of blocks `L` that produced this stack.
    pub fn blocks(&self) -> usize {
        self.depth() - 1
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn offset(&self, layer: usize, token: usize) -> Result<usize> {
        if layer >= self.depth() {
            return Err(Error::bounds("layer", layer, self.depth()));
        }
        if token >= self.tokens {
            return Err(Error::bounds("token", token, self.tokens));
        }
        Ok((layer * self.tokens + token) * self.width)
    }

    /// `h_t^(ℓ)`.
    pub fn state(&self, layer: usize, token: usize) -> Result<&[T]> {
        let o = self.offset(layer, token)?;
        Ok(&self.data[o..o + self.width])
    }

    pub fn state_mut(&mut self, layer: usize, token: usize) -> Result<&mut [T]> {
        let o = self.offset(layer, token)?;
        Ok(&mut self.data[o..o + self.width])
    }

    /// `H^(ℓ)` as a `T × d` matrix.
    pub fn layer(&self, layer: usize) -> Result<Tensor<T>> {
        let o = self.offset(layer, 0)?;
        Tensor::new(
            &[self.tokens, self.width],
            self.data[o..o + self.tokens * self.width].to_vec(),
        )
    }

    pub fn last(&self) -> Tensor<T> {
        self.layer(self.depth() - 1).expect("non-empty stack")
    }

    /// The first `layers` slices.
    pub fn truncated(&self, layers: usize) -> Result<Self> {
        if layers == 0 || layers > self.depth() {
            return Err(Error::bounds("layers", layers, self.depth()));
        }
        Ok(Self {
            tokens: self.tokens,
            width: self.width,
            data: self.data[..layers * self.tokens * self.width].to_vec(),
        })
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(&[self.depth(), self.tokens, self.width], self.data.clone()).expect("valid")
    }

    pub fn cast<U: Scalar>(&self) -> HiddenStack<U> {
        HiddenStack {
            tokens: self.tokens,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.to_tensor().bit_eq(&other.to_tensor())
    }
}

fn check_finite<T: Scalar>(layer: &Tensor<T>, index: usize) -> Result<()> {
    if layer.is_finite() {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "layer {index} contains a non-finite value"
        )))
    }
}
