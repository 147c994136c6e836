//! FLOP formulas, op-counting execution, decode cache and pipeline accounting.

pub mod counter;
pub mod decode;
pub mod flops;
pub mod instrumented;
pub mod pipeline;
pub mod report;

pub use counter::{count, Counted, FlopTally};
pub use decode::{
    simulate_decode, CacheLedger, DecodeMixer, DecodeStep, LedgerPeaks, LedgerTotals,
};
pub use flops::{
    constants, flops_depth_attn, flops_depth_attn_per_block, flops_mlp, flops_seq_shortswa,
    flops_standard_block, window_span_sum, FlopBreakdown, FormulaConstants,
};
pub use instrumented::{count_depth_attn, count_seq_shortswa};
pub use pipeline::{
    even_partition, pipeline_transfers, BoundaryTransfer, PipelineMixer, PipelinePlan,
    RecomputeCost,
};
pub use report::{cost_report, CostConfig, CostMixer, CostReport, CostRow};
