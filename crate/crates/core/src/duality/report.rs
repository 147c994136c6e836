use serde::{Deserialize, Serialize};

use crate::attention::Window;
use crate::numerics::DType;

/// How the two sides of the identity are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Both routes dispatch to the shared attention kernel; differences must be exactly zero.
    BitExact,
    /// Depth read against the dense masked oracle; differences must stay within `eps`.
    Tolerance { eps: f64 },
}

impl CheckMode {
    /// Tolerance mode at the default bound for `dtype`.
    pub fn tolerance_for(dtype: DType) -> Self {
        CheckMode::Tolerance {
            eps: default_tolerance(dtype),
        }
    }
}

/// Independent-route bound: 1e-12 in wide precision, 1e-6 in standard precision.
pub fn default_tolerance(dtype: DType) -> f64 {
    match dtype {
        DType::F32 => 1e-6,
        _ => 1e-12,
    }
}

/// Where the checked hidden-state stack came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackSource {
    /// Output of a seeded forward pass of a standard model.
    Forward,
    /// Uniform noise in `[-1, 1]`.
    Random,
    /// Supplied by the caller.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityConfig {
    #[serde(rename = "L")]
    pub blocks: usize,
    #[serde(rename = "T")]
    pub tokens: usize,
    #[serde(rename = "d")]
    pub width: usize,
    pub source: StackSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub config: DualityConfig,
    #[serde(rename = "K")]
    pub k: Window,
    pub mode: CheckMode,
    /// `[t][ℓ]`: max-abs difference between the two routes at token `t`, layer `ℓ`.
    pub cell_max_abs_diff: Vec<Vec<f64>>,
    pub global_max_abs_diff: f64,
    /// Every output element bit-identical across the two routes.
    pub exact: bool,
    /// The mode's criterion holds.
    pub passed: bool,
    pub dtype: DType,
    pub seed: Option<u64>,
    /// Wall time of the check; `None` when timing is not recorded.
    pub elapsed_ms: Option<f64>,
}

impl DualityReport {
    /// The cell with the largest difference, as `(t, ℓ, diff)`.
    pub fn worst_cell(&self) -> (usize, usize, f64) {
        let mut worst = (0, 0, 0.0);
        for (t, row) in self.cell_max_abs_diff.iter().enumerate() {
            for (l, &v) in row.iter().enumerate() {
                if v > worst.2 {
                    worst = (t, l, v);
                }
            }
        }
        worst
    }

    pub fn without_timing(mut self) -> Self {
        self.elapsed_ms = None;
        self
    }

    /// Outcome equality: every cell difference, the global max and both flags,
    /// compared bitwise. Ignores `K`, timing and provenance.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let bits = |r: &Self| -> Vec<u64> {
            r.cell_max_abs_diff
                .iter()
                .flatten()
                .map(|v| v.to_bits())
                .collect()
        };
        bits(self) == bits(other)
            && self.global_max_abs_diff.to_bits() == other.global_max_abs_diff.to_bits()
            && self.exact == other.exact
            && self.passed == other.passed
    }

    /// Global max equals the matrix max; exactness implies zero difference.
    pub fn is_consistent(&self) -> bool {
        let max = self
            .cell_max_abs_diff
            .iter()
            .flatten()
            .fold(0.0f64, |a, &b| a.max(b));
        max.to_bits() == self.global_max_abs_diff.to_bits()
            && (!self.exact || self.global_max_abs_diff == 0.0)
    }

    /// Per-cell matrix as CSV with a header row.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("t,layer,max_abs_diff\n");
        for (t, row) in self.cell_max_abs_diff.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                out.push_str(&format!("{t},{l},{v:e}\n"));
            }
        }
        out
    }
}
