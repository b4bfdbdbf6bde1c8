//! Command-line surface: experiment configuration, subcommands, and artifact
//! emission.
//!
//! Configuration comes from an INI-style file (sections of `key = value`
//! lines) with command-line flags taking precedence. Every JSON artifact
//! embeds the fully resolved configuration, so a run can be reproduced from
//! its own output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{
    bound_action_gap, bound_combined, bound_policy_gap, bound_value_gap, BoundReport,
    LipschitzCertificate,
};
use crate::environments::{CaseStudyModel, HalvingModel, SyntheticFiniteModel};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_policy, sweep_quantization, EvalConfig};
use crate::finite_solver::{solve, SolveRoute, SolverConfig};
use crate::io::{fmt_float, read_acoe_solution, read_finite_model, write_csv, write_json_artifact};
use crate::mdp_core::{ContinuousModel, FiniteModel, StationaryPolicy};
use crate::q_async::{
    occupation_weights, train_async, AsyncConfig, ExplorationPolicy, ShiftSupport, TrajectoryStep,
};
use crate::q_sync::{train_sync, LearningRate, SyncConfig, SyncReference};
use crate::quantization::{
    build_finite_model_with_threads, BuildMethod, QuantizationScheme, WeightMeasure,
};

const KNOWN_KEYS: &[&str] = &[
    "model.name",
    "model.cost",
    "model.kernel",
    "model.floor",
    "quantization.bins",
    "quantization.net",
    "quantization.weight",
    "quantization.trajectory",
    "build.method",
    "build.samples",
    "solver.route",
    "solver.tolerance",
    "solver.max_iters",
    "solver.reference_state",
    "solver.floor_delta",
    "solver.input",
    "sync.sweeps",
    "sync.snapshot_every",
    "sync.normalize_state",
    "sync.normalize_action",
    "sync.reference",
    "async.steps",
    "async.delta",
    "async.x0",
    "async.shift_support",
    "async.snapshot_every",
    "async.log_trajectory",
    "eval.horizon",
    "eval.burn_in",
    "eval.rollouts",
    "eval.x0",
    "eval.policy",
    "bounds.theorem",
    "bounds.kc",
    "bounds.kf",
    "bounds.lx",
    "bounds.mu",
    "bounds.n",
    "bounds.lu",
    "sweep.bins_list",
    "sweep.nets",
    "sweep.kc",
    "sweep.kf",
    "output.dir",
    "run.seed",
    "run.threads",
];

/// Flat key/value configuration file with `[section]` headers.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            if !KNOWN_KEYS.contains(&full.as_str()) {
                return Err(Error::Config(format!("unknown config key `{full}`")));
            }
            values.insert(full, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        ConfigFile::parse(&fs::read_to_string(path)?)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// Resolves each setting from flag, then config file, then default, and
/// records the effective value for provenance.
struct Resolver {
    file: ConfigFile,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn new(file: ConfigFile) -> Self {
        Resolver {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn record(&mut self, key: &str, value: String) -> String {
        self.resolved.insert(key.to_string(), value.clone());
        value
    }

    fn string(&mut self, key: &str, flag: Option<&str>, default: &str) -> String {
        let v = flag
            .map(str::to_string)
            .or_else(|| self.file.get(key).map(str::to_string))
            .unwrap_or_else(|| default.to_string());
        self.record(key, v)
    }

    fn string_opt(&mut self, key: &str, flag: Option<&str>) -> Option<String> {
        let v = flag
            .map(str::to_string)
            .or_else(|| self.file.get(key).map(str::to_string));
        if let Some(val) = &v {
            self.record(key, val.clone());
        }
        v
    }

    fn parse_typed<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
        raw.parse::<T>()
            .map_err(|_| Error::Config(format!("could not parse `{raw}` for {key}")))
    }

    fn u64_val(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64> {
        match flag {
            Some(v) => {
                self.record(key, v.to_string());
                Ok(v)
            }
            None => match self.file.get(key) {
                Some(raw) => {
                    let v: u64 = Self::parse_typed(key, raw)?;
                    self.record(key, v.to_string());
                    Ok(v)
                }
                None => {
                    self.record(key, default.to_string());
                    Ok(default)
                }
            },
        }
    }

    fn usize_val(&mut self, key: &str, flag: Option<usize>, default: usize) -> Result<usize> {
        Ok(self.u64_val(key, flag.map(|v| v as u64), default as u64)? as usize)
    }

    fn f64_val(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64> {
        match flag {
            Some(v) => {
                self.record(key, fmt_float(v));
                Ok(v)
            }
            None => match self.file.get(key) {
                Some(raw) => {
                    let v: f64 = Self::parse_typed(key, raw)?;
                    self.record(key, fmt_float(v));
                    Ok(v)
                }
                None => {
                    self.record(key, fmt_float(default));
                    Ok(default)
                }
            },
        }
    }

    fn f64_opt(&mut self, key: &str, flag: Option<f64>) -> Result<Option<f64>> {
        match flag {
            Some(v) => {
                self.record(key, fmt_float(v));
                Ok(Some(v))
            }
            None => match self.file.get(key) {
                Some(raw) => {
                    let v: f64 = Self::parse_typed(key, raw)?;
                    self.record(key, fmt_float(v));
                    Ok(Some(v))
                }
                None => Ok(None),
            },
        }
    }

    fn bool_val(&mut self, key: &str, flag: bool, default: bool) -> Result<bool> {
        if flag {
            self.record(key, "true".into());
            return Ok(true);
        }
        match self.file.get(key) {
            Some(raw) => {
                let v: bool = Self::parse_typed(key, raw)?;
                self.record(key, v.to_string());
                Ok(v)
            }
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

fn parse_matrix(raw: &str, what: &str) -> Result<Vec<Vec<f64>>> {
    raw.split(';')
        .map(|row| parse_f64_list(row, what))
        .collect()
}

#[derive(Parser, Debug)]
#[command(
    name = "qmdp",
    version,
    about = "Quantized approximation, exact solving, and Q-learning for average-cost MDPs"
)]
pub struct Cli {
    /// Configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Master seed for all randomized steps.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for parallelizable stages (default 1 for bit-stable
    /// output ordering; results are identical for any value).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// Model family: case_study | halving | synthetic_finite.
    #[arg(long)]
    pub model: Option<String>,

    /// synthetic_finite cost matrix: rows separated by ';', entries by ','.
    #[arg(long, allow_hyphen_values = true)]
    pub cost: Option<String>,

    /// synthetic_finite kernel: M*K rows (state-major) of M entries.
    #[arg(long, allow_hyphen_values = true)]
    pub kernel: Option<String>,

    /// synthetic_finite per-state minorization floor.
    #[arg(long, allow_hyphen_values = true)]
    pub floor: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct QuantArgs {
    /// Number of uniform state bins.
    #[arg(long)]
    pub bins: Option<usize>,

    /// Action net, e.g. `-1,0,1`.
    #[arg(long, allow_hyphen_values = true)]
    pub net: Option<String>,

    /// Weight measure: uniform | empirical (empirical needs --trajectory).
    #[arg(long)]
    pub weight: Option<String>,

    /// Trajectory CSV used to estimate the empirical weight measure.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub quant: QuantArgs,

    /// exact | monte_carlo
    #[arg(long)]
    pub method: Option<String>,

    /// Samples per bin for the monte_carlo method.
    #[arg(long)]
    pub samples: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// shifted | span
    #[arg(long)]
    pub route: Option<String>,

    /// Finite model JSON to solve.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,

    #[arg(long)]
    pub tolerance: Option<f64>,

    #[arg(long)]
    pub max_iters: Option<u64>,

    /// Reference state for the span route.
    #[arg(long)]
    pub reference_state: Option<usize>,

    /// Constant per-state floor override for the shifted route (the
    /// delta-shift fixed point).
    #[arg(long)]
    pub floor_delta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainSyncArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub quant: QuantArgs,

    #[arg(long)]
    pub sweeps: Option<u64>,

    #[arg(long)]
    pub snapshot_every: Option<u64>,

    #[arg(long)]
    pub normalize_state: Option<usize>,

    #[arg(long)]
    pub normalize_action: Option<usize>,

    /// Finite model JSON solved internally as the learning-curve reference.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainAsyncArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub quant: QuantArgs,

    #[arg(long)]
    pub steps: Option<u64>,

    #[arg(long)]
    pub delta: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,

    /// `all` or a comma list of bin indices entering the shift term.
    #[arg(long)]
    pub shift_support: Option<String>,

    #[arg(long)]
    pub snapshot_every: Option<u64>,

    /// Also write the trajectory log CSV.
    #[arg(long)]
    pub log_trajectory: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub quant: QuantArgs,

    /// Solved ACOE JSON providing the policy to lift.
    #[arg(long)]
    pub policy: Option<PathBuf>,

    #[arg(long)]
    pub horizon: Option<u64>,

    #[arg(long)]
    pub burn_in: Option<u64>,

    #[arg(long)]
    pub rollouts: Option<usize>,

    /// Comma list of initial states.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// 5 | 6 | 7 | combined
    #[arg(long)]
    pub theorem: Option<String>,

    #[arg(long = "Kc")]
    pub kc: Option<f64>,

    #[arg(long = "Kf")]
    pub kf: Option<f64>,

    #[arg(long = "Lx")]
    pub lx: Option<f64>,

    #[arg(long)]
    pub mu: Option<f64>,

    /// Action-net resolution for the 1/n bound.
    #[arg(long)]
    pub n: Option<f64>,

    #[arg(long = "Lu")]
    pub lu: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub quant: QuantArgs,

    /// Comma list of bin counts.
    #[arg(long)]
    pub bins_list: Option<String>,

    /// Action nets separated by ';', entries by ',', e.g.
    /// `-1,0,1;-1,-0.5,0,0.5,1`.
    #[arg(long, allow_hyphen_values = true)]
    pub nets: Option<String>,

    #[arg(long)]
    pub horizon: Option<u64>,

    #[arg(long)]
    pub burn_in: Option<u64>,

    #[arg(long)]
    pub rollouts: Option<usize>,

    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,

    #[arg(long = "Kc")]
    pub kc: Option<f64>,

    #[arg(long = "Kf")]
    pub kf: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quantize a model into a finite model JSON.
    Build(BuildArgs),
    /// Solve a finite model's optimality equation.
    Solve(SolveArgs),
    /// Synchronous quantized Q-learning.
    TrainSync(TrainSyncArgs),
    /// Asynchronous single-trajectory quantized Q-learning.
    TrainAsync(TrainAsyncArgs),
    /// Monte Carlo evaluation of a solved policy on the true model.
    Eval(EvalArgs),
    /// A-priori error bound calculators.
    Bounds(BoundsArgs),
    /// Quantization-rate sweep: build, solve, evaluate per cell.
    Sweep(SweepArgs),
}

enum ModelSpec {
    CaseStudy(CaseStudyModel),
    Halving(HalvingModel),
    Synthetic(SyntheticFiniteModel),
}

impl ModelSpec {
    fn as_model(&self) -> &dyn ContinuousModel {
        match self {
            ModelSpec::CaseStudy(m) => m,
            ModelSpec::Halving(m) => m,
            ModelSpec::Synthetic(m) => m,
        }
    }
}

fn resolve_model(r: &mut Resolver, args: &ModelArgs) -> Result<ModelSpec> {
    let name = r.string("model.name", args.model.as_deref(), "case_study");
    match name.as_str() {
        "case_study" => Ok(ModelSpec::CaseStudy(CaseStudyModel)),
        "halving" => Ok(ModelSpec::Halving(HalvingModel)),
        "synthetic_finite" => {
            let cost_raw = r
                .string_opt("model.cost", args.cost.as_deref())
                .ok_or_else(|| Error::Config("synthetic_finite needs model.cost".into()))?;
            let kernel_raw = r
                .string_opt("model.kernel", args.kernel.as_deref())
                .ok_or_else(|| Error::Config("synthetic_finite needs model.kernel".into()))?;
            let cost_rows = parse_matrix(&cost_raw, "cost")?;
            let m = cost_rows.len();
            let k = cost_rows.first().map_or(0, Vec::len);
            if m == 0 || k == 0 || cost_rows.iter().any(|row| row.len() != k) {
                return Err(Error::Config("cost matrix must be rectangular".into()));
            }
            let kernel_rows = parse_matrix(&kernel_raw, "kernel")?;
            if kernel_rows.len() != m * k || kernel_rows.iter().any(|row| row.len() != m) {
                return Err(Error::Config(format!(
                    "kernel must have {} rows of {m} entries",
                    m * k
                )));
            }
            let floor = match r.string_opt("model.floor", args.floor.as_deref()) {
                Some(raw) => parse_f64_list(&raw, "floor")?,
                None => vec![0.0; m],
            };
            let finite = FiniteModel::new(
                m,
                k,
                cost_rows.into_iter().flatten().collect(),
                kernel_rows.into_iter().flatten().collect(),
                floor,
            )?;
            Ok(ModelSpec::Synthetic(SyntheticFiniteModel::new(finite)?))
        }
        other => Err(Error::Config(format!(
            "unknown model `{other}` (expected case_study, halving, or synthetic_finite)"
        ))),
    }
}

fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryStep>> {
    let text = fs::read_to_string(path)?;
    let mut steps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Config(format!(
                "trajectory line {}: expected 6 fields",
                i + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("trajectory line {}: bad float", i + 1)))
        };
        steps.push(TrajectoryStep {
            t: fields[0]
                .parse()
                .map_err(|_| Error::Config("bad trajectory index".into()))?,
            x: parse(fields[1])?,
            bin: fields[2]
                .parse()
                .map_err(|_| Error::Config("bad trajectory bin".into()))?,
            action_index: fields[3]
                .parse()
                .map_err(|_| Error::Config("bad trajectory action".into()))?,
            cost: parse(fields[4])?,
            x_next: parse(fields[5])?,
        });
    }
    Ok(steps)
}

fn resolve_scheme(
    r: &mut Resolver,
    model: &ModelSpec,
    args: &QuantArgs,
) -> Result<QuantizationScheme> {
    if let ModelSpec::Synthetic(synth) = model {
        // the synthetic family is already finite; it always runs through its
        // identity quantizer
        r.record("quantization.bins", synth.finite().num_states.to_string());
        return Ok(synth.identity_scheme());
    }
    let bins = r.usize_val("quantization.bins", args.bins, 4)?;
    let net_raw = r.string("quantization.net", args.net.as_deref(), "-1,0,1");
    let net = parse_f64_list(&net_raw, "action net")?;
    let weight_name = r.string("quantization.weight", args.weight.as_deref(), "uniform");
    let bounds = model.as_model().state_bounds();
    match weight_name.as_str() {
        "uniform" => QuantizationScheme::uniform(bounds, bins, net, WeightMeasure::Uniform),
        "empirical" => {
            let path = args
                .trajectory
                .clone()
                .or_else(|| {
                    r.string_opt("quantization.trajectory", None)
                        .map(PathBuf::from)
                })
                .ok_or_else(|| {
                    Error::Config("empirical weight needs --trajectory <csv>".into())
                })?;
            r.record("quantization.trajectory", path.display().to_string());
            let base =
                QuantizationScheme::uniform(bounds, bins, net.clone(), WeightMeasure::Uniform)?;
            let mut steps = read_trajectory_csv(&path)?;
            // bins are derived data; recompute them under this scheme
            for step in &mut steps {
                step.bin = base.quantize(step.x)?.0;
            }
            let occ = occupation_weights(&steps, &base)?;
            QuantizationScheme::uniform(bounds, bins, net, occ.to_weight_measure()?)
        }
        other => Err(Error::Config(format!(
            "unknown weight measure `{other}` (expected uniform or empirical)"
        ))),
    }
}

struct Ctx {
    out_dir: PathBuf,
    seed: u64,
    threads: usize,
}

fn resolve_ctx(r: &mut Resolver, cli: &Cli) -> Result<Ctx> {
    let out_dir = PathBuf::from(r.string(
        "output.dir",
        cli.out.as_deref().map(|p| p.to_str().unwrap_or(".")),
        ".",
    ));
    let seed = r.u64_val("run.seed", cli.seed, 0)?;
    let threads = r.usize_val("run.threads", cli.threads, 1)?;
    if threads == 0 {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    fs::create_dir_all(&out_dir)?;
    Ok(Ctx {
        out_dir,
        seed,
        threads,
    })
}

fn parse_route(name: &str) -> Result<SolveRoute> {
    match name {
        "span" | "span_rvi" => Ok(SolveRoute::SpanRvi),
        "shifted" | "shifted_kernel" => Ok(SolveRoute::ShiftedKernel),
        other => Err(Error::Config(format!(
            "unknown route `{other}` (expected span or shifted)"
        ))),
    }
}

fn cmd_build(r: &mut Resolver, ctx: &Ctx, args: &BuildArgs) -> Result<()> {
    let model = resolve_model(r, &args.model)?;
    let scheme = resolve_scheme(r, &model, &args.quant)?;
    let method_name = r.string("build.method", args.method.as_deref(), "exact");
    let method = match method_name.as_str() {
        "exact" => BuildMethod::Exact,
        "monte_carlo" => {
            let samples = r.u64_val("build.samples", args.samples, 1000)?;
            BuildMethod::MonteCarlo {
                samples_per_bin: samples as usize,
                seed: ctx.seed,
            }
        }
        other => Err(Error::Config(format!(
            "unknown build method `{other}` (expected exact or monte_carlo)"
        )))?,
    };
    let finite = build_finite_model_with_threads(model.as_model(), &scheme, method, ctx.threads)?;
    write_json_artifact(ctx.out_dir.join("finite_model.json"), &finite, &r.resolved)?;
    println!(
        "wrote finite_model.json ({} states x {} actions)",
        finite.num_states, finite.num_actions
    );
    Ok(())
}

fn cmd_solve(r: &mut Resolver, ctx: &Ctx, args: &SolveArgs) -> Result<()> {
    let input = PathBuf::from(r.string(
        "solver.input",
        args.input.as_deref().and_then(Path::to_str),
        "finite_model.json",
    ));
    let finite = read_finite_model(&input)?;
    let route = parse_route(&r.string("solver.route", args.route.as_deref(), "shifted"))?;
    let tolerance = r.f64_val("solver.tolerance", args.tolerance, 1e-10)?;
    let max_iters = r.u64_val("solver.max_iters", args.max_iters, 1_000_000)?;
    let reference_state = r.usize_val("solver.reference_state", args.reference_state, 0)?;
    let floor_delta = r.f64_opt("solver.floor_delta", args.floor_delta)?;
    let cfg = SolverConfig {
        route,
        tolerance,
        max_iters,
        reference_state,
        floor_override: floor_delta.map(|d| vec![d; finite.num_states]),
    };
    let sol = solve(&finite, &cfg)?;
    write_json_artifact(ctx.out_dir.join("acoe.json"), &sol, &r.resolved)?;
    println!(
        "wrote acoe.json (gain {:?}, residual {:.3e}, {} iterations)",
        sol.gain, sol.residual, sol.iterations
    );
    Ok(())
}

fn cmd_train_sync(r: &mut Resolver, ctx: &Ctx, args: &TrainSyncArgs) -> Result<()> {
    let model = resolve_model(r, &args.model)?;
    let scheme = resolve_scheme(r, &model, &args.quant)?;
    let cfg = SyncConfig {
        num_sweeps: r.u64_val("sync.sweeps", args.sweeps, 10_000)?,
        learning_rate: LearningRate::Harmonic,
        normalization: (
            r.usize_val("sync.normalize_state", args.normalize_state, 0)?,
            r.usize_val("sync.normalize_action", args.normalize_action, 0)?,
        ),
        seed: ctx.seed,
        snapshot_every: r.u64_val("sync.snapshot_every", args.snapshot_every, 100)?,
        q0: None,
    };
    let reference_path = args
        .reference
        .clone()
        .or_else(|| r.string_opt("sync.reference", None).map(PathBuf::from));
    let reference_data = match &reference_path {
        Some(path) => {
            r.record("sync.reference", path.display().to_string());
            let finite = read_finite_model(path)?;
            let route = if finite.floor_total() > 0.0 {
                SolveRoute::ShiftedKernel
            } else {
                SolveRoute::SpanRvi
            };
            let sol = solve(&finite, &SolverConfig::with_route(route))?;
            let (y0, u0) = cfg.normalization;
            let offset = sol.q[y0 * finite.num_actions + u0];
            let q_star: Vec<f64> = sol.q.iter().map(|v| v - offset).collect();
            Some((finite, q_star))
        }
        None => None,
    };
    let reference = reference_data
        .as_ref()
        .map(|(finite, q_star)| SyncReference { finite, q_star });

    let out = train_sync(model.as_model(), &scheme, &cfg, reference)?;
    if let Some(w) = &out.warning {
        eprintln!("warning: {w}");
    }
    let payload = json!({
        "num_states": scheme.num_bins(),
        "num_actions": scheme.action_net.len(),
        "q": out.q_hat,
        "normalization": [cfg.normalization.0, cfg.normalization.1],
    });
    write_json_artifact(ctx.out_dir.join("qtable.json"), &payload, &r.resolved)?;
    let rows: Vec<Vec<String>> = out
        .curve
        .iter()
        .map(|row| {
            vec![
                row.sweep.to_string(),
                row.span_to_ref.map(fmt_float).unwrap_or_default(),
                fmt_float(row.span_successive),
                row.gain_estimate.map(fmt_float).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        ctx.out_dir.join("curve.csv"),
        &["sweep", "span_to_ref", "span_successive", "gain_estimate"],
        &rows,
    )?;
    println!("wrote qtable.json and curve.csv ({} sweeps)", cfg.num_sweeps);
    Ok(())
}

fn parse_shift_support(raw: &str) -> Result<ShiftSupport> {
    if raw == "all" || raw == "all_bins" {
        Ok(ShiftSupport::AllBins)
    } else {
        Ok(ShiftSupport::Bins(parse_usize_list(raw, "shift support")?))
    }
}

fn cmd_train_async(r: &mut Resolver, ctx: &Ctx, args: &TrainAsyncArgs) -> Result<()> {
    let model = resolve_model(r, &args.model)?;
    let scheme = resolve_scheme(r, &model, &args.quant)?;
    let support_raw = r.string("async.shift_support", args.shift_support.as_deref(), "all");
    // default shift coefficient: half the smallest certified bin mass
    let delta = match r.f64_opt("async.delta", args.delta)? {
        Some(d) => d,
        None => {
            let mu = model.as_model().minorization().ok_or_else(|| {
                Error::Config(
                    "no minorization certificate to derive a default delta from; pass --delta"
                        .into(),
                )
            })?;
            let min_mass = scheme
                .bins
                .iter()
                .map(|b| mu.bin_mass(b))
                .fold(f64::INFINITY, f64::min);
            let d = 0.5 * min_mass;
            r.record("async.delta", crate::io::fmt_float(d));
            d
        }
    };
    let cfg = AsyncConfig {
        horizon: r.u64_val("async.steps", args.steps, 100_000)?,
        delta,
        shift_support: parse_shift_support(&support_raw)?,
        exploration: ExplorationPolicy::UniformActions,
        initial_state: r.f64_val("async.x0", args.x0, 0.5)?,
        seed: ctx.seed,
        snapshot_every: r.u64_val("async.snapshot_every", args.snapshot_every, 1000)?,
        log_trajectory: r.bool_val("async.log_trajectory", args.log_trajectory, false)?,
        q0: None,
    };
    let out = train_async(model.as_model(), &scheme, &cfg, None)?;
    let final_gain = crate::q_async::gain_estimate(
        &out.q,
        scheme.num_bins(),
        scheme.action_net.len(),
        cfg.delta,
        &cfg.shift_support,
    );
    let payload = json!({
        "num_states": scheme.num_bins(),
        "num_actions": scheme.action_net.len(),
        "q": out.q,
        "visits": out.visits,
        "gain_estimate": final_gain,
    });
    write_json_artifact(ctx.out_dir.join("qtable.json"), &payload, &r.resolved)?;
    let rows: Vec<Vec<String>> = out
        .curve
        .iter()
        .map(|row| {
            vec![
                row.t.to_string(),
                fmt_float(row.gain_estimate),
                row.sup_to_ref.map(fmt_float).unwrap_or_default(),
                row.visits_min.to_string(),
            ]
        })
        .collect();
    write_csv(
        ctx.out_dir.join("curve.csv"),
        &["t", "gain_estimate", "sup_to_ref", "visits_min"],
        &rows,
    )?;
    if cfg.log_trajectory {
        let rows: Vec<Vec<String>> = out
            .trajectory
            .iter()
            .map(|s| {
                vec![
                    s.t.to_string(),
                    fmt_float(s.x),
                    s.bin.to_string(),
                    s.action_index.to_string(),
                    fmt_float(s.cost),
                    fmt_float(s.x_next),
                ]
            })
            .collect();
        write_csv(
            ctx.out_dir.join("trajectory.csv"),
            &["t", "x", "bin", "action_index", "cost", "x_next"],
            &rows,
        )?;
    }
    println!(
        "wrote qtable.json and curve.csv (gain estimate {:?})",
        final_gain
    );
    Ok(())
}

fn cmd_eval(r: &mut Resolver, ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let model = resolve_model(r, &args.model)?;
    let scheme = resolve_scheme(r, &model, &args.quant)?;
    let policy_path = PathBuf::from(r.string(
        "eval.policy",
        args.policy.as_deref().and_then(Path::to_str),
        "acoe.json",
    ));
    let sol = read_acoe_solution(&policy_path)?;
    let policy = StationaryPolicy::new(sol.policy.clone(), scheme)?;
    let x0_raw = r.string("eval.x0", args.x0.as_deref(), "0.5");
    let cfg = EvalConfig {
        horizon: r.u64_val("eval.horizon", args.horizon, 1_000_000)?,
        burn_in: r.u64_val("eval.burn_in", args.burn_in, 10_000)?,
        num_rollouts: r.usize_val("eval.rollouts", args.rollouts, 8)?,
        initial_states: parse_f64_list(&x0_raw, "initial states")?,
        seed: ctx.seed,
        threads: ctx.threads,
    };
    let report = evaluate_policy(model.as_model(), &policy, &cfg)?;
    let payload = json!({
        "mean": report.mean,
        "stderr": report.stderr,
        "rollouts": report
            .per_rollout
            .iter()
            .map(|rv| json!({"initial_state": rv.initial_state, "value": rv.value}))
            .collect::<Vec<_>>(),
    });
    write_json_artifact(ctx.out_dir.join("eval.json"), &payload, &r.resolved)?;
    println!("wrote eval.json (mean {:?} +- {:?})", report.mean, report.stderr);
    Ok(())
}

fn cmd_bounds(r: &mut Resolver, ctx: &Ctx, args: &BoundsArgs) -> Result<()> {
    let theorem = r.string("bounds.theorem", args.theorem.as_deref(), "6");
    let kc = r.f64_val("bounds.kc", args.kc, 0.7)?;
    let kf = r.f64_val("bounds.kf", args.kf, 0.9)?;
    let cert = LipschitzCertificate::declared(kc, kf)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("K_c".to_string(), kc);
    inputs.insert("K_f".to_string(), kf);
    let bound = match theorem.as_str() {
        "5" => {
            let n = r
                .f64_opt("bounds.n", args.n)?
                .ok_or_else(|| Error::Config("theorem 5 needs --n".into()))?;
            inputs.insert("n".into(), n);
            bound_action_gap(&cert, n)?
        }
        "6" => {
            let lx = r
                .f64_opt("bounds.lx", args.lx)?
                .ok_or_else(|| Error::Config("theorem 6 needs --Lx".into()))?;
            inputs.insert("L_X".into(), lx);
            bound_value_gap(&cert, lx)?
        }
        "7" => {
            let lx = r
                .f64_opt("bounds.lx", args.lx)?
                .ok_or_else(|| Error::Config("theorem 7 needs --Lx".into()))?;
            let mu = r
                .f64_opt("bounds.mu", args.mu)?
                .ok_or_else(|| Error::Config("theorem 7 needs --mu".into()))?;
            inputs.insert("L_X".into(), lx);
            inputs.insert("mu".into(), mu);
            bound_policy_gap(&cert, lx, mu)?
        }
        "combined" => {
            let lx = r
                .f64_opt("bounds.lx", args.lx)?
                .ok_or_else(|| Error::Config("combined bound needs --Lx".into()))?;
            let mu = r
                .f64_opt("bounds.mu", args.mu)?
                .ok_or_else(|| Error::Config("combined bound needs --mu".into()))?;
            let lu = r
                .f64_opt("bounds.lu", args.lu)?
                .ok_or_else(|| Error::Config("combined bound needs --Lu".into()))?;
            inputs.insert("L_X".into(), lx);
            inputs.insert("mu".into(), mu);
            inputs.insert("L_U".into(), lu);
            bound_combined(&cert, lx, mu, lu)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown theorem `{other}` (expected 5, 6, 7, or combined)"
            )))
        }
    };
    let report = BoundReport {
        theorem: theorem.clone(),
        inputs,
        bound,
        empirical_gap: None,
        satisfied: None,
    };
    write_json_artifact(ctx.out_dir.join("bound_report.json"), &report, &r.resolved)?;
    println!("{bound:?}");
    Ok(())
}

fn cmd_sweep(r: &mut Resolver, ctx: &Ctx, args: &SweepArgs) -> Result<()> {
    let model = resolve_model(r, &args.model)?;
    let bins_raw = r.string("sweep.bins_list", args.bins_list.as_deref(), "3,4,5,8,12,20");
    let bins = parse_usize_list(&bins_raw, "bins list")?;
    let nets_raw = r.string("sweep.nets", args.nets.as_deref(), "-1,0,1");
    let nets = parse_matrix(&nets_raw, "net")?;
    let x0_raw = r.string("eval.x0", args.x0.as_deref(), "0.5");
    let eval_cfg = EvalConfig {
        horizon: r.u64_val("eval.horizon", args.horizon, 1_000_000)?,
        burn_in: r.u64_val("eval.burn_in", args.burn_in, 10_000)?,
        num_rollouts: r.usize_val("eval.rollouts", args.rollouts, 8)?,
        initial_states: parse_f64_list(&x0_raw, "initial states")?,
        seed: ctx.seed,
        threads: ctx.threads,
    };
    let kc = r.f64_opt("sweep.kc", args.kc)?;
    let kf = r.f64_opt("sweep.kf", args.kf)?;
    let cert = match (kc, kf) {
        (Some(kc), Some(kf)) => Some(LipschitzCertificate::declared(kc, kf)?),
        (None, None) => None,
        _ => {
            return Err(Error::Config(
                "provide both --Kc and --Kf (or neither) for the bound column".into(),
            ))
        }
    };
    let cells = sweep_quantization(model.as_model(), &bins, &nets, &eval_cfg, cert.as_ref())?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.num_bins.to_string(),
                c.net_id.to_string(),
                fmt_float(c.l_x),
                fmt_float(c.mean_cost),
                fmt_float(c.stderr),
                fmt_float(c.gain_finite_model),
                c.bound_theorem7.map(fmt_float).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        ctx.out_dir.join("sweep.csv"),
        &[
            "M",
            "net_id",
            "L_X",
            "mean_cost",
            "stderr",
            "gain_finite_model",
            "bound_theorem7",
        ],
        &rows,
    )?;
    println!("wrote sweep.csv ({} cells)", cells.len());
    Ok(())
}

/// Execute a parsed command. `out_dir_hint` receives the resolved output
/// directory as soon as it is known, so failures can still be reported
/// there.
pub fn run(cli: &Cli, out_dir_hint: &mut PathBuf) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut resolver = Resolver::new(file);
    let ctx = resolve_ctx(&mut resolver, cli)?;
    *out_dir_hint = ctx.out_dir.clone();
    match &cli.command {
        Command::Build(args) => cmd_build(&mut resolver, &ctx, args),
        Command::Solve(args) => cmd_solve(&mut resolver, &ctx, args),
        Command::TrainSync(args) => cmd_train_sync(&mut resolver, &ctx, args),
        Command::TrainAsync(args) => cmd_train_async(&mut resolver, &ctx, args),
        Command::Eval(args) => cmd_eval(&mut resolver, &ctx, args),
        Command::Bounds(args) => cmd_bounds(&mut resolver, &ctx, args),
        Command::Sweep(args) => cmd_sweep(&mut resolver, &ctx, args),
    }
}

/// Write the machine-readable failure report next to the other artifacts.
pub fn write_error_report(out_dir: &Path, err: &Error) {
    let payload = json!({
        "kind": err.kind(),
        "message": err.to_string(),
        "exit_code": err.exit_code(),
    });
    if let Ok(text) = serde_json::to_string_pretty(&payload) {
        let _ = fs::write(out_dir.join("error.json"), text + "\n");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_sections() {
        let cfg = ConfigFile::parse(
            "# experiment\n[model]\nname = case_study\n\n[quantization]\nbins = 5\nnet = -1,0,1\n",
        )
        .unwrap();
        assert_eq!(cfg.get("model.name"), Some("case_study"));
        assert_eq!(cfg.get("quantization.bins"), Some("5"));
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(ConfigFile::parse("[model]\nnmae = typo\n").is_err());
        assert!(ConfigFile::parse("free floating\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let file = ConfigFile::parse("[quantization]\nbins = 5\n").unwrap();
        let mut r = Resolver::new(file);
        assert_eq!(r.usize_val("quantization.bins", Some(9), 4).unwrap(), 9);
        assert_eq!(r.resolved.get("quantization.bins").unwrap(), "9");
        let file = ConfigFile::parse("[quantization]\nbins = 5\n").unwrap();
        let mut r = Resolver::new(file);
        assert_eq!(r.usize_val("quantization.bins", None, 4).unwrap(), 5);
    }

    #[test]
    fn shift_support_parsing() {
        assert_eq!(parse_shift_support("all").unwrap(), ShiftSupport::AllBins);
        assert_eq!(
            parse_shift_support("0,2").unwrap(),
            ShiftSupport::Bins(vec![0, 2])
        );
        assert!(parse_shift_support("0,x").is_err());
    }

    #[test]
    fn synthetic_model_from_inline_matrices() {
        let file = ConfigFile::default();
        let mut r = Resolver::new(file);
        let args = ModelArgs {
            model: Some("synthetic_finite".into()),
            cost: Some("0.1,0.9;0.4,0.2".into()),
            kernel: Some("0.6,0.4;0.3,0.7;0.5,0.5;0.2,0.8".into()),
            floor: Some("0.1,0.2".into()),
        };
        let spec = resolve_model(&mut r, &args).unwrap();
        match spec {
            ModelSpec::Synthetic(s) => {
                assert_eq!(s.finite().num_states, 2);
                assert_eq!(s.finite().num_actions, 2);
                assert_eq!(s.finite().floor, vec![0.1, 0.2]);
            }
            _ => panic!("expected synthetic model"),
        }
    }
}
