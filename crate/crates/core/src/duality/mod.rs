//! Mechanical check that the depth-wise residual read equals causal
//! sliding-window attention over each token's layer trajectory.

mod check;
mod report;
mod sweep;

pub use check::{check_duality, check_full_window_limit, extract_trajectory, scatter_trajectory};
pub use report::{default_tolerance, CheckMode, DualityConfig, DualityReport, StackSource};
pub use sweep::{build_case, run_case, sweep, DEPTH_PARAM_SCALE};
