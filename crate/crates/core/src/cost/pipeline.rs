//! Pipeline-stage transfer accounting for depth-axis reads.
//!
//! Blocks `0..L-1` are split into `P` contiguous stages. Block `ℓ` consumes
//! the states `H^(j)` named by its mixer, `H^(ℓ)` being its own input. The
//! baseline pipeline forwards `H^(s)` into a stage starting at block `s`;
//! any other state produced upstream of that boundary and still read
//! downstream is an extra transfer across it.

use serde::{Deserialize, Serialize};

use crate::attention::Window;
use crate::error::{Error, Result};

use super::flops::{flops_depth_attn_per_block, flops_standard_block};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum PipelineMixer {
    Standard,
    SeqShortswa,
    DepthAttn { k: Window },
    Elc,
    Denseformer,
}

impl PipelineMixer {
    pub fn tag(&self) -> &'static str {
        match self {
            PipelineMixer::Standard => "standard",
            PipelineMixer::SeqShortswa => "seq_shortswa",
            PipelineMixer::DepthAttn { .. } => "depth_attn",
            PipelineMixer::Elc => "elc",
            PipelineMixer::Denseformer => "denseformer",
        }
    }

    /// True when state `j` is read by block `l`.
    fn reads(&self, l: usize, j: usize) -> bool {
        match *self {
            PipelineMixer::DepthAttn { k } => j <= l && j >= k.start(l),
            PipelineMixer::Elc | PipelineMixer::Denseformer => j <= l,
            _ => j == l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryTransfer {
    pub boundary: usize,
    /// First block of the downstream stage; the baseline forwards `H^(start)`.
    pub downstream_start: usize,
    /// Upstream states that must also cross, per token.
    pub extra_states: Vec<usize>,
    pub extras: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecomputeCost {
    /// Block evaluations added downstream, per token sequence.
    pub block_evals: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelinePlan {
    #[serde(rename = "L")]
    pub blocks: usize,
    #[serde(rename = "P")]
    pub stages: usize,
    /// `[first, last]` block of each stage.
    pub partition: Vec<(usize, usize)>,
    pub mixer: PipelineMixer,
    pub boundaries: Vec<BoundaryTransfer>,
    /// Extra states per token summed over boundaries.
    pub total_extras: usize,
}

/// Stages as equal as possible, earlier stages taking the remainder.
pub fn even_partition(blocks: usize, stages: usize) -> Result<Vec<(usize, usize)>> {
    if stages == 0 {
        return Err(Error::Config("`P` must be at least 1".into()));
    }
    if stages > blocks {
        return Err(Error::Config(format!(
            "`P` = {stages} exceeds `L` = {blocks}"
        )));
    }
    let (base, rem) = (blocks / stages, blocks % stages);
    let mut out = Vec::with_capacity(stages);
    let mut start = 0;
    for s in 0..stages {
        let len = base + usize::from(s < rem);
        out.push((start, start + len - 1));
        start += len;
    }
    Ok(out)
}

fn validate_partition(blocks: usize, stages: usize, partition: &[(usize, usize)]) -> Result<()> {
    if blocks == 0 {
        return Err(Error::Config("`L` must be at least 1".into()));
    }
    if stages == 0 {
        return Err(Error::Config("`P` must be at least 1".into()));
    }
    if partition.len() != stages {
        return Err(Error::Config(format!(
            "partition has {} stages, `P` = {stages}",
            partition.len()
        )));
    }
    let mut next = 0;
    for (i, &(a, b)) in partition.iter().enumerate() {
        if a != next || b < a {
            return Err(Error::Config(format!(
                "stage {i} = {a}..={b} does not continue at block {next}"
            )));
        }
        next = b + 1;
    }
    if next != blocks {
        return Err(Error::Config(format!(
            "partition covers {next} blocks, `L` = {blocks}"
        )));
    }
    Ok(())
}

pub fn pipeline_transfers(
    blocks: usize,
    stages: usize,
    partition: &[(usize, usize)],
    mixer: PipelineMixer,
) -> Result<PipelinePlan> {
    validate_partition(blocks, stages, partition)?;
    if let PipelineMixer::DepthAttn { k } = mixer {
        k.validate("K")?;
    }
    let boundaries: Vec<BoundaryTransfer> = partition[1..]
        .iter()
        .enumerate()
        .map(|(b, &(start, _))| {
            let extra_states: Vec<usize> = (0..start)
                .filter(|&j| (start..blocks).any(|m| mixer.reads(m, j)))
                .collect();
            BoundaryTransfer {
                boundary: b,
                downstream_start: start,
                extras: extra_states.len(),
                extra_states,
            }
        })
        .collect();
    let total_extras = boundaries.iter().map(|b| b.extras).sum();
    Ok(PipelinePlan {
        blocks,
        stages,
        partition: partition.to_vec(),
        mixer,
        boundaries,
        total_extras,
    })
}

impl PipelinePlan {
    /// Cost of regenerating the extra states downstream instead of sending
    /// them. The stage rebuilds `H^(1..=j)` from the token embedding `H^(0)`,
    /// which any stage can form locally, up to the latest state it lacks.
    /// Each re-run block is priced as a standard block plus its depth read.
    pub fn recompute_cost(
        &self,
        tokens: usize,
        d: usize,
        mlp_hidden: usize,
    ) -> Result<RecomputeCost> {
        let standard = flops_standard_block(tokens, d, mlp_hidden)?;
        let depth = match self.mixer {
            PipelineMixer::DepthAttn { k } => {
                flops_depth_attn_per_block(tokens, k, self.blocks, d, d, d)?
                    .into_iter()
                    .map(|f| f.total())
                    .collect()
            }
            PipelineMixer::Elc | PipelineMixer::Denseformer => {
                // convex combination of l+1 states per token
                (0..self.blocks)
                    .map(|l| (2 * (l + 1) * d * tokens) as u64)
                    .collect()
            }
            _ => vec![0; self.blocks],
        };
        let mut cost = RecomputeCost::default();
        for b in &self.boundaries {
            let evals = b.extra_states.iter().copied().max().unwrap_or(0);
            cost.block_evals += evals;
            cost.flops += (0..evals).map(|j| standard + depth[j]).sum::<u64>();
        }
        Ok(cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn depth(k: usize) -> PipelineMixer {
        PipelineMixer::DepthAttn {
            k: Window::Finite(k),
        }
    }

    /// Window membership listed block by block: everything block `m` reads
    /// that was produced before the stage boundary and is not the forwarded input.
    fn enumerate(blocks: usize, start: usize, k: usize) -> usize {
        let mut needed = vec![false; blocks + 1];
        for m in start..blocks {
            let lo = (m + 1).saturating_sub(k);
            for (j, slot) in needed.iter_mut().enumerate().take(m + 1).skip(lo) {
                if j < start {
                    *slot = true;
                }
            }
        }
        needed.iter().filter(|&&x| x).count()
    }

    #[test]
    fn two_stage_scenario() {
        let part = even_partition(8, 2).unwrap();
        assert_eq!(part, vec![(0, 3), (4, 7)]);
        let plan = pipeline_transfers(8, 2, &part, depth(3)).unwrap();
        assert_eq!(enumerate(8, 4, 3), 2);
        assert_eq!(plan.total_extras, 2);
        assert_eq!(plan.boundaries[0].extra_states, vec![2, 3]);
    }

    #[test]
    fn zero_extras() {
        for p in 1..=8 {
            let part = even_partition(8, p).unwrap();
            for m in [
                PipelineMixer::Standard,
                PipelineMixer::SeqShortswa,
                depth(1),
            ] {
                assert_eq!(pipeline_transfers(8, p, &part, m).unwrap().total_extras, 0);
            }
        }
    }

    #[test]
    fn full_window_sends_all_earlier_states() {
        let part = even_partition(9, 3).unwrap();
        let plan =
            pipeline_transfers(9, 3, &part, PipelineMixer::DepthAttn { k: Window::Full }).unwrap();
        assert_eq!(
            plan.boundaries.iter().map(|b| b.extras).collect::<Vec<_>>(),
            vec![3, 6]
        );
    }

    #[test]
    fn invalid_partitions() {
        assert!(even_partition(4, 0).is_err());
        assert!(even_partition(4, 5).is_err());
        assert!(pipeline_transfers(4, 2, &[(0, 1), (3, 3)], depth(2)).is_err());
        assert!(pipeline_transfers(4, 2, &[(0, 1), (2, 2)], depth(2)).is_err());
        assert!(pipeline_transfers(4, 1, &[(0, 1), (2, 3)], depth(2)).is_err());
        assert!(pipeline_transfers(4, 2, &[(0, 1), (2, 3)], depth(0)).is_err());
    }

    #[test]
    fn recompute_counts_block_evals() {
        let part = even_partition(8, 2).unwrap();
        let plan = pipeline_transfers(8, 2, &part, depth(3)).unwrap();
        let c = plan.recompute_cost(4, 8, 32).unwrap();
        assert_eq!(c.block_evals, 3);
        assert!(c.flops > 0);
        let plan = pipeline_transfers(8, 2, &part, depth(1)).unwrap();
        assert_eq!(
            plan.recompute_cost(4, 8, 32).unwrap(),
            RecomputeCost::default()
        );
    }

    proptest! {
        #[test]
        fn matches_enumeration(l in 1usize..14, p in 1usize..6, k in 1usize..16) {
            prop_assume!(p <= l);
            let part = even_partition(l, p).unwrap();
            let plan = pipeline_transfers(l, p, &part, depth(k)).unwrap();
            for b in &plan.boundaries {
                prop_assert_eq!(b.extras, enumerate(l, b.downstream_start, k));
                prop_assert_eq!(b.extras, (k - 1).min(b.downstream_start));
            }
            prop_assert_eq!(plan.boundaries.len(), p - 1);
            prop_assert_eq!(plan.total_extras == 0, k == 1 || p == 1);
        }
    }
}
