//! Learned-static depth aggregation: fixed per-layer coefficient tables over
//! earlier layer states, with no query/key read.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar, Tensor};
use crate::stack::HiddenStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    /// Rows are convex combinations.
    ElcConvex,
    /// Rows are unconstrained depth-weighted averages.
    DenseformerAvg,
}

const CONVEX_TOL: f64 = 1e-9;

/// Lower-triangular coefficient table: `rows[ℓ][j]` weights `H^(j)`, `j ≤ ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticDepthWeights {
    pub kind: AggregatorKind,
    pub rows: Vec<Vec<f64>>,
}

impl StaticDepthWeights {
    pub fn new(kind: AggregatorKind, rows: Vec<Vec<f64>>) -> Result<Self> {
        let w = Self { kind, rows };
        w.validate()?;
        Ok(w)
    }

    /// One-hot on the current layer in every row.
    pub fn identity(kind: AggregatorKind, depth: usize) -> Self {
        let rows = (0..depth)
            .map(|l| (0..=l).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { kind, rows }
    }

    pub fn uniform(kind: AggregatorKind, depth: usize) -> Self {
        let rows = (0..depth)
            .map(|l| vec![1.0 / (l + 1) as f64; l + 1])
            .collect();
        Self { kind, rows }
    }

    /// ELC rows: normalized positive draws. DenseFormer rows: one-hot on the
    /// current layer plus uniform noise in `[-0.5, 0.5]` on every entry.
    pub fn random(kind: AggregatorKind, depth: usize, rng: &mut Rng) -> Self {
        let rows = (0..depth)
            .map(|l| match kind {
                AggregatorKind::ElcConvex => {
                    let raw: Vec<f64> = (0..=l).map(|_| rng.uniform(0.05, 1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / total).collect()
                }
                AggregatorKind::DenseformerAvg => (0..=l)
                    .map(|j| rng.uniform(-0.5, 0.5) + if j == l { 1.0 } else { 0.0 })
                    .collect(),
            })
            .collect();
        Self { kind, rows }
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        for l in 0..self.rows.len() {
            self.check_row(l)?;
        }
        Ok(())
    }

    fn check_row(&self, layer: usize) -> Result<&[f64]> {
        let row = self
            .rows
            .get(layer)
            .ok_or_else(|| Error::bounds("aggregation row", layer, self.rows.len()))?;
        if row.len() != layer + 1 {
            return Err(Error::dim("aggregation row", &[row.len()], &[layer + 1]));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "aggregation row {layer} is not finite"
            )));
        }
        if self.kind == AggregatorKind::ElcConvex {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > CONVEX_TOL {
                return Err(Error::Invariant(format!(
                    "ELC row {layer} is not convex (sum {sum})"
                )));
            }
        }
        Ok(row)
    }
}

fn combine<T: Scalar>(h: &HiddenStack<T>, layer: usize, coeffs: &[f64]) -> Result<Tensor<T>> {
    if layer >= h.depth() {
        return Err(Error::bounds("layer", layer, h.depth()));
    }
    let layers = (0..=layer)
        .map(|j| h.layer(j))
        .collect::<Result<Vec<_>>>()?;
    let coeffs: Vec<T::Acc> = coeffs
        .iter()
        .map(|&c| T::from_f64_lossy(c).widen())
        .collect();
    let n = layers[0].len();
    let data = (0..n)
        .map(|i| {
            let acc = layers
                .iter()
                .zip(&coeffs)
                .fold(T::Acc::zero(), |acc, (x, &c)| acc + c * x.data()[i].widen());
            T::narrow(acc)
        })
        .collect();
    Tensor::new(&[h.tokens(), h.width()], data)
}

/// `Σ_{j≤ℓ} α[ℓ][j]·H^(j)` with a convex row.
pub fn elc_aggregate<T: Scalar>(
    h: &HiddenStack<T>,
    layer: usize,
    weights: &StaticDepthWeights,
) -> Result<Tensor<T>> {
    if weights.kind != AggregatorKind::ElcConvex {
        return Err(Error::param(
            "weights.kind",
            "elc_aggregate needs ELC_CONVEX weights",
        ));
    }
    combine(h, layer, weights.check_row(layer)?)
}

/// `Σ_{j≤ℓ} α[ℓ][j]·H^(j)` with unconstrained coefficients.
pub fn denseformer_aggregate<T: Scalar>(
    h: &HiddenStack<T>,
    layer: usize,
    weights: &StaticDepthWeights,
) -> Result<Tensor<T>> {
    if weights.kind != AggregatorKind::DenseformerAvg {
        return Err(Error::param(
            "weights.kind",
            "denseformer_aggregate needs DENSEFORMER_AVG weights",
        ));
    }
    combine(h, layer, weights.check_row(layer)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn stack(seed: u64, layers: usize) -> HiddenStack<f64> {
        HiddenStack::from_tensor(&Rng::new(seed).uniform_tensor(&[layers, 3, 4], -1.0, 1.0))
            .unwrap()
    }

    fn duplicated(seed: u64) -> HiddenStack<f64> {
        let layer = Rng::new(seed).uniform_tensor::<f64>(&[3, 4], -1.0, 1.0);
        let mut h = HiddenStack::from_input(&layer).unwrap();
        h.push(&layer).unwrap();
        h
    }

    #[test]
    fn one_hot_is_identity() {
        let h = stack(1, 4);
        for kind in [AggregatorKind::ElcConvex, AggregatorKind::DenseformerAvg] {
            let w = StaticDepthWeights::identity(kind, 4);
            for l in 0..4 {
                let out = match kind {
                    AggregatorKind::ElcConvex => elc_aggregate(&h, l, &w),
                    AggregatorKind::DenseformerAvg => denseformer_aggregate(&h, l, &w),
                }
                .unwrap();
                assert!(out.bit_eq(&h.layer(l).unwrap()));
            }
        }
    }

    #[test]
    fn uniform_is_mean() {
        let h = stack(2, 3);
        let w = StaticDepthWeights::uniform(AggregatorKind::ElcConvex, 3);
        let out = elc_aggregate(&h, 2, &w).unwrap();
        for i in 0..out.len() {
            let mean = (0..3).map(|l| h.layer(l).unwrap().data()[i]).sum::<f64>() / 3.0;
            assert!((out.data()[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn convex_fixed_point_and_cancellation() {
        let h = duplicated(3);
        let elc =
            StaticDepthWeights::new(AggregatorKind::ElcConvex, vec![vec![1.0], vec![0.5, 0.5]])
                .unwrap();
        assert!(elc_aggregate(&h, 1, &elc)
            .unwrap()
            .bit_eq(&h.layer(0).unwrap()));
        let df = StaticDepthWeights::new(
            AggregatorKind::DenseformerAvg,
            vec![vec![1.0], vec![1.0, -1.0]],
        )
        .unwrap();
        assert!(denseformer_aggregate(&h, 1, &df)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn loop_summation_oracle() {
        let h = stack(4, 5);
        let w = StaticDepthWeights::random(AggregatorKind::DenseformerAvg, 5, &mut Rng::new(44));
        for l in 0..5 {
            let out = denseformer_aggregate(&h, l, &w).unwrap();
            let mut expect = vec![0.0; out.len()];
            for j in 0..=l {
                let layer = h.layer(j).unwrap();
                for (e, x) in expect.iter_mut().zip(layer.data()) {
                    *e += w.rows[l][j] * x;
                }
            }
            let diff = out
                .data()
                .iter()
                .zip(&expect)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn errors() {
        let h = stack(5, 3);
        let bad = StaticDepthWeights {
            kind: AggregatorKind::ElcConvex,
            rows: vec![vec![1.0], vec![0.7, 0.7]],
        };
        assert!(matches!(
            elc_aggregate(&h, 1, &bad),
            Err(Error::Invariant(_))
        ));
        let short = StaticDepthWeights {
            kind: AggregatorKind::DenseformerAvg,
            rows: vec![vec![1.0], vec![1.0]],
        };
        assert!(matches!(
            denseformer_aggregate(&h, 1, &short),
            Err(Error::Dimension { .. })
        ));
        let elc = StaticDepthWeights::identity(AggregatorKind::ElcConvex, 3);
        assert!(denseformer_aggregate(&h, 1, &elc).is_err());
    }

    proptest! {
        #[test]
        fn elc_stays_in_convex_hull(seed in any::<u64>(), layers in 1usize..6) {
            let h = stack(seed, layers);
            let w = StaticDepthWeights::random(AggregatorKind::ElcConvex, layers, &mut Rng::new(seed ^ 0x5a5a));
            let l = layers - 1;
            let out = elc_aggregate(&h, l, &w).unwrap();
            for i in 0..out.len() {
                let vals: Vec<f64> = (0..=l).map(|j| h.layer(j).unwrap().data()[i]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.data()[i] >= lo - 1e-12 && out.data()[i] <= hi + 1e-12);
            }
        }
    }
}
