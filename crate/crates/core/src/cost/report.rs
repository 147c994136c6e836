//! Cost reports: formula next to the instrumented count.

use serde::{Deserialize, Serialize};

use crate::attention::Window;
use crate::error::Result;

use super::flops::{
    constants, flops_depth_attn, flops_depth_attn_per_block, flops_seq_shortswa, FlopBreakdown,
    FormulaConstants,
};
use super::instrumented::{count_depth_attn, count_seq_shortswa};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum CostMixer {
    SeqShortswa {
        w: Window,
    },
    DepthAttn {
        #[serde(rename = "K")]
        k: Window,
        #[serde(rename = "L")]
        blocks: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostConfig {
    pub mixer: CostMixer,
    #[serde(rename = "T")]
    pub tokens: usize,
    pub d: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    /// `"total"` or the block index.
    pub scope: String,
    pub formula: FlopBreakdown,
    pub counter: Option<FlopBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub config: CostConfig,
    pub constants: FormulaConstants,
    pub rows: Vec<CostRow>,
    /// Formula equals the executed count on every row that has one.
    pub agree: bool,
}

impl CostReport {
    pub fn total(&self) -> &CostRow {
        &self.rows[0]
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("scope,source,projection,score,value,output,softmax,score_value\n");
        for r in &self.rows {
            let mut line = |src: &str, f: &FlopBreakdown| {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.scope,
                    src,
                    f.projection,
                    f.score,
                    f.value,
                    f.output,
                    f.softmax,
                    f.score_value()
                ))
            };
            line("formula", &r.formula);
            if let Some(c) = &r.counter {
                line("counter", c);
            }
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
            "scope", "source", "projection", "score", "value", "output", "softmax", "score+value"
        );
        for r in &self.rows {
            let mut line = |src: &str, f: &FlopBreakdown| {
                s.push_str(&format!(
                    "{:<8} {:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
                    r.scope,
                    src,
                    f.projection,
                    f.score,
                    f.value,
                    f.output,
                    f.softmax,
                    f.score_value()
                ))
            };
            line("formula", &r.formula);
            if let Some(c) = &r.counter {
                line("counter", c);
            }
        }
        s.push_str(if self.agree {
            "formula == counter\n"
        } else {
            "formula != counter\n"
        });
        s
    }
}

/// Evaluates the formula and, when `instrument` is set, executes the kernels
/// to count the same quantity.
pub fn cost_report(config: CostConfig, instrument: bool) -> Result<CostReport> {
    let CostConfig {
        mixer,
        tokens,
        d,
        d_k,
        d_v,
        seed,
    } = config;
    let mut rows = Vec::new();
    match mixer {
        CostMixer::SeqShortswa { w } => {
            let formula = flops_seq_shortswa(tokens, w, d, d_k, d_v)?;
            let counter = instrument
                .then(|| count_seq_shortswa(tokens, w, d, d_k, d_v, seed))
                .transpose()?;
            rows.push(CostRow {
                scope: "total".into(),
                formula,
                counter: counter.map(|c| c.0),
            });
        }
        CostMixer::DepthAttn { k, blocks } => {
            let formula = flops_depth_attn(tokens, k, blocks, d, d_k, d_v)?;
            let counter = instrument
                .then(|| count_depth_attn(tokens, k, blocks, d, d_k, d_v, seed))
                .transpose()?;
            rows.push(CostRow {
                scope: "total".into(),
                formula,
                counter: counter.map(|c| c.0),
            });
            for (l, f) in flops_depth_attn_per_block(tokens, k, blocks, d, d_k, d_v)?
                .into_iter()
                .enumerate()
            {
                rows.push(CostRow {
                    scope: l.to_string(),
                    formula: f,
                    counter: None,
                });
            }
        }
    }
    let agree = rows
        .iter()
        .all(|r| r.counter.is_none_or(|c| c == r.formula));
    Ok(CostReport {
        config,
        constants: constants(),
        rows,
        agree,
    })
}
