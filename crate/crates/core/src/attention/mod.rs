//! Causal windowed attention on an ordered axis, the depth-wise residual
//! read, and the static depth aggregators.

mod dense;
mod depth;
mod kernel;
mod params;
mod static_agg;
mod swa;
mod window;

pub use dense::dense_masked_attention;
pub use depth::{depth_residual_read, depth_window};
pub use params::AttentionParams;
pub use static_agg::{denseformer_aggregate, elc_aggregate, AggregatorKind, StaticDepthWeights};
pub use swa::causal_swa;
pub use window::{Axis, Window, WindowSpec};
