use serde::{Deserialize, Serialize};

use crate::attention::{StaticDepthWeights, Window};
use crate::error::{Error, Result};

/// How a depth-read output re-enters the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Injection {
    /// `H^(ℓ) + Z^(ℓ)` before the block. An artifact choice.
    Additive,
}

/// Sequence-mixing / depth-aggregation choice for every block of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum MixerSpec {
    /// Pre-norm block with full causal attention.
    Standard,
    /// Local-to-global block: sliding-window sublayer of width `w` before full attention.
    SeqShortswa { w: Window },
    /// Depth-wise residual read over a window of `k` layer states, injected before the block.
    DepthAttn {
        k: Window,
        injection: Injection,
        /// One set of read projections for every layer when true.
        shared: bool,
    },
    /// Convex combination of earlier states feeds each block.
    Elc { weights: StaticDepthWeights },
    /// Depth-weighted average of all states after each block.
    Denseformer { weights: StaticDepthWeights },
}

impl MixerSpec {
    pub fn depth_attn(k: Window) -> Self {
        MixerSpec::DepthAttn {
            k,
            injection: Injection::Additive,
            shared: true,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            MixerSpec::Standard => "standard",
            MixerSpec::SeqShortswa { .. } => "seq_shortswa",
            MixerSpec::DepthAttn { .. } => "depth_attn",
            MixerSpec::Elc { .. } => "elc",
            MixerSpec::Denseformer { .. } => "denseformer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Block count `L`.
    #[serde(rename = "L")]
    pub blocks: usize,
    /// Sequence length `T`.
    #[serde(rename = "T")]
    pub tokens: usize,
    /// Model width `d`.
    #[serde(rename = "d")]
    pub width: usize,
    pub mlp_hidden: usize,
    pub mixer: MixerSpec,
    pub seed: u64,
}

impl ModelConfig {
    /// `mlp_hidden` defaults to `4d`.
    pub fn new(blocks: usize, tokens: usize, width: usize, mixer: MixerSpec, seed: u64) -> Self {
        Self {
            blocks,
            tokens,
            width,
            mlp_hidden: 4 * width,
            mixer,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("L", self.blocks),
            ("T", self.tokens),
            ("d", self.width),
            ("mlp_hidden", self.mlp_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be at least 1")));
            }
        }
        match &self.mixer {
            MixerSpec::Standard => {}
            MixerSpec::SeqShortswa { w } => check_window("w", *w, self.tokens)?,
            MixerSpec::DepthAttn { k, .. } => check_window("K", *k, self.blocks + 1)?,
            MixerSpec::Elc { weights } | MixerSpec::Denseformer { weights } => {
                let expected = match &self.mixer {
                    MixerSpec::Elc { .. } => crate::attention::AggregatorKind::ElcConvex,
                    _ => crate::attention::AggregatorKind::DenseformerAvg,
                };
                if weights.kind != expected {
                    return Err(Error::Config(format!(
                        "mixer `{}` needs {expected:?} weights",
                        self.mixer.tag()
                    )));
                }
                if weights.depth() != self.blocks + 1 {
                    return Err(Error::Config(format!(
                        "aggregation table has {} rows, expected L+1 = {}",
                        weights.depth(),
                        self.blocks + 1
                    )));
                }
                weights
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn check_window(name: &str, w: Window, max: usize) -> Result<()> {
    match w {
        Window::Finite(v) if v == 0 || v > max => Err(Error::Config(format!(
            "`{name}` = {v} out of range 1..={max} (or full)"
        ))),
        _ => Ok(()),
    }
}
