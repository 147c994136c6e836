use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use resdual::attention::Window;
use resdual::cost::{
    cost_report, even_partition, pipeline_transfers, simulate_decode, CostConfig, CostMixer,
    DecodeMixer, PipelineMixer,
};
use resdual::duality::{sweep, CheckMode, DualityReport, StackSource};
use resdual::model::{MixerSpec, ModelConfig};
use resdual::numerics::DType;
use serde::Serialize;

mod output;

use output::{destination, emit, Envelope, Format, OUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "resdual",
    version,
    about = "Depth-wise residual attention: duality checks, cost accounting and cache simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that depth reads equal causal sliding-window attention over each token's trajectory.
    VerifyDuality(VerifyArgs),
    /// FLOP formulas next to counts taken by executing the kernels.
    Cost(CostArgs),
    /// Decode-time cache ledger or pipeline-stage transfer plan.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report file. Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for `<command>.<ext>` reports; stdout when unset.
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    BitExact,
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DTypeArg {
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SourceArg {
    Forward,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
struct VerifyArgs {
    #[arg(long = "L", default_value_t = 4)]
    #[serde(rename = "L")]
    blocks: usize,
    #[arg(long = "T", default_value_t = 6)]
    #[serde(rename = "T")]
    tokens: usize,
    #[arg(long = "d", default_value_t = 8)]
    d: usize,
    /// Depth window sizes, comma separated; `full` for K = ℓ+1.
    #[arg(long = "K", required = true, value_delimiter = ',', value_parser = parse_k)]
    #[serde(rename = "K")]
    k: Vec<Window>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, value_enum, default_value = "bit-exact")]
    mode: ModeArg,
    /// Tolerance bound; defaults to 1e-12 for f64 and 1e-6 for f32.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value = "f64")]
    dtype: DTypeArg,
    #[arg(long, value_enum, default_value = "forward")]
    source: SourceArg,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum CostMixerArg {
    SeqSwa,
    DepthAttn,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CostArgs {
    #[arg(long, value_enum)]
    mixer: CostMixerArg,
    #[arg(long = "T", default_value_t = 8)]
    #[serde(rename = "T")]
    tokens: usize,
    #[arg(long = "w", value_parser = parse_w)]
    w: Option<Window>,
    #[arg(long = "K", value_parser = parse_k)]
    #[serde(rename = "K")]
    k: Option<Window>,
    #[arg(long = "L", default_value_t = 4)]
    #[serde(rename = "L")]
    blocks: usize,
    #[arg(long = "d", default_value_t = 4)]
    d: usize,
    /// Key width; defaults to `d`.
    #[arg(long)]
    d_k: Option<usize>,
    /// Value width; defaults to `d`.
    #[arg(long)]
    d_v: Option<usize>,
    /// Seed for the values the instrumented run executes on.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the instrumented run and report the formula only.
    #[arg(long)]
    formula_only: bool,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SimMixerArg {
    Full,
    SeqSwa,
    DepthAttn,
    Elc,
    Denseformer,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("what").required(true).args(["decode", "pipeline"])))]
struct SimulateArgs {
    /// Token-by-token decode cache ledger.
    #[arg(long)]
    decode: bool,
    /// Extra states crossing pipeline-stage boundaries.
    #[arg(long)]
    pipeline: bool,
    /// Defaults to `full` for decode and `depth-attn` for pipeline.
    #[arg(long, value_enum)]
    mixer: Option<SimMixerArg>,
    #[arg(long = "w", value_parser = parse_w)]
    w: Option<Window>,
    #[arg(long = "K", value_parser = parse_k)]
    #[serde(rename = "K")]
    k: Option<Window>,
    #[arg(long = "L", default_value_t = 1)]
    #[serde(rename = "L")]
    blocks: usize,
    #[arg(long = "d", default_value_t = 4)]
    d: usize,
    #[arg(long)]
    d_k: Option<usize>,
    #[arg(long)]
    d_v: Option<usize>,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    /// Unit for the byte columns of the decode ledger.
    #[arg(long, default_value_t = 4)]
    bytes_per_scalar: u64,
    #[arg(long = "P", default_value_t = 1)]
    #[serde(rename = "P")]
    stages: usize,
    /// Explicit stages, e.g. `0-3,4-7`; an even split when omitted.
    #[arg(long)]
    partition: Option<String>,
    /// Sequence length used to price recomputation.
    #[arg(long = "T", default_value_t = 1)]
    #[serde(rename = "T")]
    tokens: usize,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

fn parse_window(s: &str, name: &str) -> Result<Window, String> {
    match s.parse::<usize>() {
        _ if s.eq_ignore_ascii_case("full") => Ok(Window::Full),
        Ok(0) => Err(format!("`{name}` must be at least 1 or `full`")),
        Ok(n) => Ok(Window::Finite(n)),
        Err(_) => Err(format!(
            "`{name}` expects a positive integer or `full`, got `{s}`"
        )),
    }
}

fn parse_k(s: &str) -> Result<Window, String> {
    parse_window(s, "K")
}

fn parse_w(s: &str) -> Result<Window, String> {
    parse_window(s, "w")
}

enum Failure {
    /// Bad flags or configuration: exit 2.
    Usage(anyhow::Error),
    /// A check ran and did not hold: exit 1.
    Check(String),
}

impl From<resdual::Error> for Failure {
    fn from(e: resdual::Error) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn required<T>(v: Option<T>, flag: &str, why: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("`{flag}` is required {why}")))
}

fn verify_duality(args: &VerifyArgs) -> Outcome {
    if args.seeds == 0 {
        return Err(usage("`seeds` must be at least 1"));
    }
    let dtype = match args.dtype {
        DTypeArg::F64 => DType::F64,
        DTypeArg::F32 => DType::F32,
    };
    let mode = match (args.mode, args.eps) {
        (ModeArg::BitExact, None) => CheckMode::BitExact,
        (ModeArg::BitExact, Some(_)) => {
            return Err(usage("`eps` only applies to --mode tolerance"))
        }
        (ModeArg::Tolerance, None) => CheckMode::tolerance_for(dtype),
        (ModeArg::Tolerance, Some(eps)) if eps.is_finite() && eps >= 0.0 => {
            CheckMode::Tolerance { eps }
        }
        (ModeArg::Tolerance, Some(eps)) => {
            return Err(usage(format!(
                "`eps` must be a finite nonnegative number, got {eps}"
            )))
        }
    };
    let source = match args.source {
        SourceArg::Forward => StackSource::Forward,
        SourceArg::Random => StackSource::Random,
    };
    let config = ModelConfig::new(
        args.blocks,
        args.tokens,
        args.d,
        MixerSpec::Standard,
        args.seed,
    );
    config.validate()?;
    for k in &args.k {
        k.validate("K")?;
    }
    let end = args
        .seed
        .checked_add(args.seeds)
        .ok_or_else(|| usage("`seed` + `seeds` overflows"))?;
    let seeds: Vec<u64> = (args.seed..end).collect();
    let reports = match dtype {
        DType::F32 => sweep::<f32>(&[config], &args.k, &seeds, source, mode, false)?,
        _ => sweep::<f64>(&[config], &args.k, &seeds, source, mode, false)?,
    };

    let contents = match args.output.format {
        Format::Json => Envelope::new(
            "verify-duality",
            args,
            Some(args.seed),
            dtype.name(),
            &reports,
        )
        .to_json()?,
        Format::Csv => {
            let mut s = String::from("seed,K,t,layer,max_abs_diff\n");
            for r in &reports {
                for line in r.cells_csv().lines().skip(1) {
                    s.push_str(&format!("{},{},{line}\n", r.seed.unwrap_or(0), r.k));
                }
            }
            s
        }
        Format::Table => {
            let mut s = format!(
                "{:>6} {:>6} {:>14} {:>6} {:>6} {:>14}\n",
                "seed", "K", "max_abs_diff", "exact", "pass", "worst (t,l)"
            );
            for r in &reports {
                let (t, l, _) = r.worst_cell();
                s.push_str(&format!(
                    "{:>6} {:>6} {:>14.3e} {:>6} {:>6} {:>14}\n",
                    r.seed.unwrap_or(0),
                    r.k.to_string(),
                    r.global_max_abs_diff,
                    r.exact,
                    r.passed,
                    format!("({t},{l})")
                ));
            }
            s
        }
    };
    emit(
        destination(
            args.output.out.as_deref(),
            args.output.out_dir.as_deref(),
            "verify-duality",
            args.output.format,
        ),
        &contents,
    )?;

    let failed: Vec<&DualityReport> = reports.iter().filter(|r| !r.passed).collect();
    match failed
        .iter()
        .max_by(|a, b| a.global_max_abs_diff.total_cmp(&b.global_max_abs_diff))
    {
        None => Ok(()),
        Some(r) => {
            let (t, l, diff) = r.worst_cell();
            Err(Failure::Check(format!(
                "{} of {} checks failed; worst cell: seed {}, K {}, t = {t}, layer = {l}, max abs diff = {diff:e}",
                failed.len(),
                reports.len(),
                r.seed.unwrap_or(0),
                r.k
            )))
        }
    }
}

fn cost(args: &CostArgs) -> Outcome {
    let mixer = match args.mixer {
        CostMixerArg::SeqSwa => CostMixer::SeqShortswa {
            w: required(args.w, "w", "for --mixer seq-swa")?,
        },
        CostMixerArg::DepthAttn => CostMixer::DepthAttn {
            k: required(args.k, "K", "for --mixer depth-attn")?,
            blocks: args.blocks,
        },
    };
    let config = CostConfig {
        mixer,
        tokens: args.tokens,
        d: args.d,
        d_k: args.d_k.unwrap_or(args.d),
        d_v: args.d_v.unwrap_or(args.d),
        seed: args.seed,
    };
    let report = cost_report(config, !args.formula_only)?;
    let contents = match args.output.format {
        Format::Json => Envelope::new(
            "cost",
            args,
            Some(args.seed),
            DType::Counted.name(),
            &report,
        )
        .to_json()?,
        Format::Csv => report.to_csv(),
        Format::Table => report.to_table(),
    };
    emit(
        destination(
            args.output.out.as_deref(),
            args.output.out_dir.as_deref(),
            "cost",
            args.output.format,
        ),
        &contents,
    )?;
    if report.agree {
        Ok(())
    } else {
        Err(Failure::Check(
            "formula and instrumented count disagree".into(),
        ))
    }
}

fn parse_partition(s: &str) -> Result<Vec<(usize, usize)>, Failure> {
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .trim()
                .split_once('-')
                .unwrap_or((part.trim(), part.trim()));
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(usage(format!(
                    "`partition`: cannot read stage `{part}`, expected `first-last`"
                ))),
            }
        })
        .collect()
}

fn simulate(args: &SimulateArgs) -> Outcome {
    if args.decode {
        simulate_decode_cmd(args)
    } else {
        simulate_pipeline_cmd(args)
    }
}

fn simulate_decode_cmd(args: &SimulateArgs) -> Outcome {
    let mixer = match args.mixer.unwrap_or(SimMixerArg::Full) {
        SimMixerArg::Full => DecodeMixer::Standard,
        SimMixerArg::SeqSwa => DecodeMixer::SeqShortswa {
            w: required(args.w, "w", "for --mixer seq-swa")?,
        },
        SimMixerArg::DepthAttn => DecodeMixer::DepthAttn {
            k: required(args.k, "K", "for --mixer depth-attn")?,
        },
        SimMixerArg::Elc => DecodeMixer::Elc,
        SimMixerArg::Denseformer => DecodeMixer::Denseformer,
    };
    if args.bytes_per_scalar == 0 {
        return Err(usage("`bytes-per-scalar` must be at least 1"));
    }
    let ledger = simulate_decode(
        mixer,
        args.blocks,
        args.d,
        args.d_k.unwrap_or(args.d),
        args.d_v.unwrap_or(args.d),
        args.steps,
    )?;
    #[derive(Serialize)]
    struct DecodeReport<'a> {
        ledger: &'a resdual::cost::CacheLedger,
        bytes_per_scalar: u64,
        peak_bytes: u64,
    }
    let report = DecodeReport {
        ledger: &ledger,
        bytes_per_scalar: args.bytes_per_scalar,
        peak_bytes: ledger.peak_bytes(args.bytes_per_scalar),
    };
    let contents = match args.output.format {
        Format::Json => Envelope::new("simulate", args, None, "scalar-count", &report).to_json()?,
        Format::Csv => ledger.to_csv(),
        Format::Table => {
            let mut s = format!(
                "{:>8} {:>10} {:>14} {:>12} {:>10} {:>14}\n",
                "step", "rows/layer", "token_scalars", "depth_states", "depth_obl", "total_scalars"
            );
            for e in &ledger.steps {
                s.push_str(&format!(
                    "{:>8} {:>10} {:>14} {:>12} {:>10} {:>14}\n",
                    e.step,
                    e.token_rows_per_layer,
                    e.token_scalars,
                    e.depth_states_resident,
                    e.depth_window_obligations,
                    e.total_scalars
                ));
            }
            s.push_str(&format!(
                "peak: rows/layer {}, total scalars {}, {} bytes at {} bytes/scalar\n",
                ledger.peak.token_rows_per_layer,
                ledger.peak.total_scalars,
                report.peak_bytes,
                args.bytes_per_scalar
            ));
            s
        }
    };
    emit(
        destination(
            args.output.out.as_deref(),
            args.output.out_dir.as_deref(),
            "simulate-decode",
            args.output.format,
        ),
        &contents,
    )?;
    Ok(())
}

fn simulate_pipeline_cmd(args: &SimulateArgs) -> Outcome {
    let mixer = match args.mixer.unwrap_or(SimMixerArg::DepthAttn) {
        SimMixerArg::Full => PipelineMixer::Standard,
        SimMixerArg::SeqSwa => PipelineMixer::SeqShortswa,
        SimMixerArg::DepthAttn => PipelineMixer::DepthAttn {
            k: required(args.k, "K", "for --mixer depth-attn")?,
        },
        SimMixerArg::Elc => PipelineMixer::Elc,
        SimMixerArg::Denseformer => PipelineMixer::Denseformer,
    };
    let partition = match &args.partition {
        Some(s) => parse_partition(s)?,
        None => even_partition(args.blocks, args.stages)?,
    };
    let plan = pipeline_transfers(args.blocks, args.stages, &partition, mixer)?;
    let recompute =
        plan.recompute_cost(args.tokens, args.d, args.mlp_hidden.unwrap_or(4 * args.d))?;
    #[derive(Serialize)]
    struct PipelineReport<'a> {
        plan: &'a resdual::cost::PipelinePlan,
        transfer_mode_extra_states_per_token: usize,
        recompute_mode: resdual::cost::RecomputeCost,
    }
    let report = PipelineReport {
        plan: &plan,
        transfer_mode_extra_states_per_token: plan.total_extras,
        recompute_mode: recompute,
    };
    let contents = match args.output.format {
        Format::Json => Envelope::new("simulate", args, None, "scalar-count", &report).to_json()?,
        Format::Csv => {
            let mut s = String::from("boundary,downstream_start,extras,extra_states\n");
            for b in &plan.boundaries {
                let states: Vec<String> = b.extra_states.iter().map(usize::to_string).collect();
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    b.boundary,
                    b.downstream_start,
                    b.extras,
                    states.join(";")
                ));
            }
            s
        }
        Format::Table => {
            let mut s = format!(
                "{:>8} {:>16} {:>7} {}\n",
                "boundary", "downstream_start", "extras", "states"
            );
            for b in &plan.boundaries {
                s.push_str(&format!(
                    "{:>8} {:>16} {:>7} {:?}\n",
                    b.boundary, b.downstream_start, b.extras, b.extra_states
                ));
            }
            s.push_str(&format!("extras = {} per token\n", plan.total_extras));
            s.push_str(&format!(
                "recompute instead: {} block evaluations, {} flops at T = {}\n",
                recompute.block_evals, recompute.flops, args.tokens
            ));
            s
        }
    };
    emit(
        destination(
            args.output.out.as_deref(),
            args.output.out_dir.as_deref(),
            "simulate-pipeline",
            args.output.format,
        ),
        &contents,
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::VerifyDuality(a) => verify_duality(a),
        Command::Cost(a) => cost(a),
        Command::Simulate(a) => simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
