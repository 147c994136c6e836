use crate::attention::{denseformer_aggregate, elc_aggregate};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};
use crate::stack::HiddenStack;

use super::block::{forward_block_depth_attn, forward_block_recommended, forward_block_standard};
use super::config::{MixerSpec, ModelConfig};
use super::weights::{depth_read_sets, ModelWeights};

/// Runs the configured block `L` times and keeps every layer state.
///
/// Static aggregators: ELC feeds block `ℓ` with row `ℓ` of its table over
/// `H^(0..=ℓ)`; DenseFormer replaces the raw block output with row `ℓ+1` of its
/// table over `[H^(0..=ℓ), block output]`.
pub fn forward_model<T: Scalar>(
    config: &ModelConfig,
    input: &Tensor<T>,
    weights: &ModelWeights<T>,
) -> Result<HiddenStack<T>> {
    config.validate()?;
    if input.shape() != [config.tokens, config.width] {
        return Err(Error::dim(
            "forward_model input",
            input.shape(),
            &[config.tokens, config.width],
        ));
    }
    if weights.blocks.len() != config.blocks || weights.depth_read.len() != depth_read_sets(config)
    {
        return Err(Error::Config(
            "weights do not match the model configuration".into(),
        ));
    }
    let mut stack = HiddenStack::from_input(input)?;
    for (l, block) in weights.blocks.iter().enumerate() {
        let next = match &config.mixer {
            MixerSpec::Standard => forward_block_standard(&stack.layer(l)?, block)?,
            MixerSpec::SeqShortswa { w } => forward_block_recommended(&stack.layer(l)?, block, *w)?,
            MixerSpec::DepthAttn { k, .. } => {
                let params = weights.depth_params(l).expect("depth-read weights present");
                forward_block_depth_attn(&stack, l, block, params, *k)?
            }
            MixerSpec::Elc { weights: table } => {
                forward_block_standard(&elc_aggregate(&stack, l, table)?, block)?
            }
            MixerSpec::Denseformer { weights: table } => {
                let raw = forward_block_standard(&stack.layer(l)?, block)?;
                let mut scratch = stack.clone();
                scratch.push(&raw)?;
                denseformer_aggregate(&scratch, l + 1, table)?
            }
        };
        stack.push(&next)?;
    }
    Ok(stack)
}
