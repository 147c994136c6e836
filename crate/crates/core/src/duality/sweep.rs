use rayon::prelude::*;

use crate::attention::{AttentionParams, Window};
use crate::error::{Error, Result};
use crate::model::{forward_model, init_weights, ModelConfig};
use crate::numerics::{Rng, Scalar, Tensor};
use crate::stack::HiddenStack;

use super::check::check_duality;
use super::report::{CheckMode, DualityReport, StackSource};

/// Half-width of the uniform interval for depth-read projections in generated cases.
pub const DEPTH_PARAM_SCALE: f64 = 0.5;

/// Seeded stack and depth-read projections for one check.
///
/// Everything is drawn in `f64` from one generator: model weights and input
/// (forward source) or the raw stack (random source), then the projections.
/// The result is cast to `T`, so both precisions see the same values.
pub fn build_case<T: Scalar>(
    config: &ModelConfig,
    source: StackSource,
    seed: u64,
) -> Result<(HiddenStack<T>, AttentionParams<T>)> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let stack: HiddenStack<f64> = match source {
        StackSource::Forward => {
            let weights = init_weights::<f64>(config, &mut rng)?;
            let input: Tensor<f64> = rng.uniform_tensor(&[config.tokens, config.width], -1.0, 1.0);
            forward_model(config, &input, &weights)?
        }
        StackSource::Random => HiddenStack::from_tensor(&rng.uniform_tensor(
            &[config.blocks + 1, config.tokens, config.width],
            -1.0,
            1.0,
        ))?,
        StackSource::External => {
            return Err(Error::param(
                "source",
                "external stacks cannot be generated",
            ));
        }
    };
    let params = AttentionParams::<f64>::random(
        &mut rng,
        config.width,
        -DEPTH_PARAM_SCALE,
        DEPTH_PARAM_SCALE,
    );
    Ok((stack.cast(), params.cast()))
}

/// One seeded check with provenance filled in.
pub fn run_case<T: Scalar>(
    config: &ModelConfig,
    source: StackSource,
    k: Window,
    seed: u64,
    mode: CheckMode,
) -> Result<DualityReport> {
    let (h, p) = build_case::<T>(config, source, seed)?;
    let mut report = check_duality(&h, &p, k, mode)?;
    report.config.source = source;
    report.seed = Some(seed);
    Ok(report)
}

/// Cartesian sweep ordered config-major, then `K`, then seed. Cells run in
/// parallel; the output order is fixed. Timing is dropped unless `timed`.
pub fn sweep<T: Scalar>(
    configs: &[ModelConfig],
    ks: &[Window],
    seeds: &[u64],
    source: StackSource,
    mode: CheckMode,
    timed: bool,
) -> Result<Vec<DualityReport>> {
    if configs.is_empty() || ks.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one config, K and seed".into(),
        ));
    }
    for (i, c) in configs.iter().enumerate() {
        c.validate()
            .map_err(|e| Error::Config(format!("config #{i}: {e}")))?;
    }
    for k in ks {
        k.validate("K")?;
    }
    let cases: Vec<_> = configs
        .iter()
        .flat_map(|c| {
            ks.iter()
                .flat_map(move |&k| seeds.iter().map(move |&s| (c, k, s)))
        })
        .collect();
    cases
        .par_iter()
        .map(|&(c, k, s)| {
            let r = run_case::<T>(c, source, k, s, mode)?;
            Ok(if timed { r } else { r.without_timing() })
        })
        .collect()
}
