mod config;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sliced_ot::exactot::wasserstein_exact_pp;
use sliced_ot::flow::{run_flow, FlowConfig, KappaSchedule};
use sliced_ot::measures::{gen_gaussian, gen_ring, gen_s_curve, load_csv, save_csv, DiscreteMeasure};
use sliced_ot::rng::stream_rng;
use sliced_ot::sphere::SliceFamily;
use sliced_ot::studies::{self, BenchRow};
use sliced_ot::swfamily::{DistanceEstimate, EnergyFunction, EstimatorConfig, Variant};
use sliced_ot::Error;

const SUBCOMMANDS: &[&str] = &["gen-data", "distance", "flow", "bench"];

#[derive(Parser)]
#[command(name = "sliced-ot", version, about = "Sliced Wasserstein distances, gradient flows and studies")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SLICED_OT_THREADS")]
    threads: Option<usize>,

    /// File of `key = value` lines using the flag names; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic point cloud to CSV.
    GenData(GenData),
    /// Estimate a distance between two CSV measures and print JSON.
    Distance(Distance),
    /// Run a particle gradient flow and export the trajectory.
    Flow(Flow),
    /// Run a benchmark study and emit long-format CSV.
    Bench(Bench),
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Gaussian,
    SCurve,
    Ring,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum)]
    shape: Shape,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Dimension (Gaussian only; the other shapes are planar).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    d: u64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Offset of the first coordinate (Gaussian).
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    /// Standard deviation (Gaussian).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Uniform,
    Vmf,
    Ps,
}

#[derive(Args, Clone)]
struct EstimatorArgs {
    #[arg(long = "p", default_value_t = 2.0)]
    p: f64,
    /// Number of projecting directions.
    #[arg(long = "L", default_value_t = 100)]
    l: usize,
    /// Independent direction sets for IWRPSW.
    #[arg(long = "H", default_value_t = 1)]
    h: usize,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum, default_value = "ps")]
    family: FamilyArg,
    /// exp, identity or poly:<degree>.
    #[arg(long, default_value = "exp")]
    energy: String,
    /// Ascent iterations for Max-SW and DSW.
    #[arg(long = "T", default_value_t = 100)]
    t: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EstimatorArgs {
    fn family(&self, default_kappa: f64) -> SliceFamily {
        let kappa = self.kappa.unwrap_or(default_kappa);
        match self.family {
            FamilyArg::Uniform => SliceFamily::Uniform,
            FamilyArg::Vmf => SliceFamily::VonMisesFisher { kappa },
            FamilyArg::Ps => SliceFamily::PowerSpherical { kappa },
        }
    }

    fn config(&self, default_kappa: f64, diagnostics: bool) -> Result<EstimatorConfig, CliError> {
        let energy: EnergyFunction = self.energy.parse().map_err(CliError::usage)?;
        let cfg = EstimatorConfig {
            p: self.p,
            projections: self.l,
            repeats: self.h,
            family: self.family(default_kappa),
            energy,
            seed: self.seed,
            optimizer: sliced_ot::swfamily::OptimizerConfig { iterations: self.t, learning_rate: self.lr },
            diagnostics,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Sw,
    MaxSw,
    Dsw,
    Ebsw,
    Rpsw,
    Iwrpsw,
    Exact,
}

impl VariantArg {
    fn sliced(self) -> Option<Variant> {
        Some(match self {
            Self::Sw => Variant::Sw,
            Self::MaxSw => Variant::MaxSw,
            Self::Dsw => Variant::Dsw,
            Self::Ebsw => Variant::Ebsw,
            Self::Rpsw => Variant::Rpsw,
            Self::Iwrpsw => Variant::Iwrpsw,
            Self::Exact => return None,
        })
    }
}

#[derive(Args)]
struct Distance {
    #[arg(long, value_enum)]
    variant: VariantArg,
    mu: PathBuf,
    nu: PathBuf,
    #[command(flatten)]
    est: EstimatorArgs,
    /// Include per-direction records.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    /// Decay from kappa0 to 1 over the run.
    Toy,
    /// Decay from kappa0 to 1e-3 over the run.
    Long,
    /// Constant kappa.
    None,
}

#[derive(Args)]
struct Flow {
    #[arg(long, value_enum, default_value = "rpsw")]
    variant: VariantArg,
    src: PathBuf,
    tgt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long = "step-size", default_value_t = 1e-4)]
    step_size: f64,
    #[arg(long, default_value_t = 100.0)]
    kappa0: f64,
    #[arg(long, value_enum, default_value = "toy")]
    schedule: ScheduleArg,
    #[arg(long = "eval-every", default_value_t = 25)]
    eval_every: usize,
    #[arg(long = "record-every", default_value_t = 25)]
    record_every: usize,
    #[command(flatten)]
    est: EstimatorArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    McError,
    SampleComplexity,
    ChainInequality,
    Timing,
}

#[derive(Args)]
struct Bench {
    #[arg(long, value_enum)]
    study: Study,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Comma-separated values of L (mc-error, timing).
    #[arg(long = "L-grid", value_delimiter = ',', default_value = "10,100,1000,10000")]
    l_grid: Vec<usize>,
    /// Comma-separated sample sizes (sample-complexity).
    #[arg(long = "n-grid", value_delimiter = ',', default_value = "50,100,200,400,800")]
    n_grid: Vec<usize>,
    /// Comma-separated dimensions (chain-inequality).
    #[arg(long = "d-grid", value_delimiter = ',', default_value = "2,5,10")]
    d_grid: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long = "reference-L", default_value_t = 1_000_000)]
    reference_l: usize,
    #[arg(long = "reference-n", default_value_t = 10_000)]
    reference_n: usize,
    /// Grid size for the 2D Max-SW bound.
    #[arg(long, default_value_t = 100_000)]
    resolution: usize,
    /// Timing repetitions (best is kept).
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    est: EstimatorArgs,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        Self { code: 2, message: e.to_string() }
    }

    fn compute(e: impl std::fmt::Display) -> Self {
        Self { code: 1, message: e.to_string() }
    }

    fn from_core(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv { .. } => Self::usage(e),
            other => Self::compute(other),
        }
    }
}

fn load(path: &PathBuf) -> Result<DiscreteMeasure, CliError> {
    load_csv(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn family_json(f: &SliceFamily) -> (Value, Value) {
    (json!(f.name()), f.kappa().map_or(Value::Null, |k| json!(k)))
}

fn estimate_json(e: &DistanceEstimate) -> Value {
    Value::Array(
        e.per_direction
            .iter()
            .map(|r| json!({ "direction": r.direction.as_slice(), "projected_pp": r.projected_pp, "weight": r.weight }))
            .collect(),
    )
}

fn cmd_gen_data(a: GenData) -> Result<(), CliError> {
    let mut rng = stream_rng(a.seed, 0);
    let n = a.n as usize;
    let m = match a.shape {
        Shape::Gaussian => {
            let mut mean = vec![0.0; a.d as usize];
            mean[0] = a.shift;
            gen_gaussian(n, &mean, a.scale, &mut rng)
        }
        Shape::SCurve => gen_s_curve(n, a.noise, &mut rng),
        Shape::Ring => gen_ring(n, a.radius, a.noise, &mut rng),
    }
    .map_err(CliError::usage)?;
    save_csv(&m, &a.out).map_err(|e| CliError::usage(format!("{}: {e}", a.out.display())))
}

fn cmd_distance(a: Distance) -> Result<Value, CliError> {
    let cfg = a.est.config(50.0, a.diagnostics)?;
    let mu = load(&a.mu)?;
    let nu = load(&a.nu)?;
    let start = Instant::now();
    let (value, raw_pp, std_error, per_direction) = match a.variant.sliced() {
        Some(v) => {
            let e = v.estimate(&mu, &nu, &cfg).map_err(CliError::from_core)?;
            (e.value, e.raw_pp, e.std_error, a.diagnostics.then(|| estimate_json(&e)))
        }
        None => {
            let pp = wasserstein_exact_pp(&mu, &nu, cfg.p).map_err(CliError::from_core)?;
            (pp.powf(1.0 / cfg.p), pp, None, None)
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let (family, kappa) = family_json(&cfg.family);
    let name = match a.variant.sliced() {
        Some(v) => v.name(),
        None => "exact",
    };
    let mut out = json!({
        "variant": name,
        "value": value,
        "raw_pp": raw_pp,
        "std_error": std_error,
        "p": cfg.p,
        "L": cfg.projections,
        "H": cfg.repeats,
        "kappa": kappa,
        "family": family,
        "seed": cfg.seed,
        "seconds": seconds,
    });
    if let Some(d) = per_direction {
        out["per_direction"] = d;
    }
    Ok(out)
}

fn cmd_flow(a: Flow) -> Result<Value, CliError> {
    let variant = a.variant.sliced().ok_or_else(|| CliError::usage("the exact distance has no flow"))?;
    let est = a.est.config(a.kappa0, false)?;
    let schedule = match a.schedule {
        ScheduleArg::Toy => Some(KappaSchedule::toy(a.kappa0, a.steps)),
        ScheduleArg::Long => Some(KappaSchedule::long_run(a.kappa0, a.steps)),
        ScheduleArg::None => None,
    }
    .filter(|_| variant.uses_kappa() && est.family.kappa().is_some() && a.steps > 0);
    let cfg = FlowConfig {
        variant,
        estimator: est,
        step_size: a.step_size,
        steps: a.steps,
        schedule,
        eval_every: a.eval_every,
        record_every: a.record_every,
        notes: None,
    };
    cfg.validate().map_err(CliError::usage)?;
    let src = load(&a.src)?;
    let tgt = load(&a.tgt)?;
    let tr = run_flow(&src, &tgt, &cfg).map_err(CliError::from_core)?;
    tr.export(&a.out).map_err(|e| CliError::usage(format!("{}: {e}", a.out.display())))?;
    Ok(json!({
        "out": a.out.display().to_string(),
        "variant": variant.name(),
        "steps": a.steps,
        "initial_w2": tr.initial_w2(),
        "final_w2": tr.final_w2(),
        "seconds": tr.metrics.last().map(|m| m.seconds),
    }))
}

fn cmd_bench(a: Bench) -> Result<(), CliError> {
    let cfg = a.est.config(10.0, false)?;
    let rows: Vec<BenchRow> = match a.study {
        Study::McError => {
            let (mu, nu) = studies::gaussian_pair(cfg.seed, a.n, a.d, 1.0, 1.5).map_err(CliError::from_core)?;
            studies::mc_error(&mu, &nu, &cfg, &a.l_grid, a.seeds, a.reference_l)
        }
        Study::SampleComplexity => studies::sample_complexity(a.d, &a.n_grid, a.reference_n, a.seeds, &cfg),
        Study::ChainInequality => studies::chain_inequality(a.n, &a.d_grid, a.seeds, &cfg, a.resolution),
        Study::Timing => studies::timing(a.n, a.d, &a.l_grid, a.repeats, &cfg),
    }
    .map_err(CliError::from_core)?;
    match &a.out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            studies::write_rows(&rows, f).map_err(CliError::from_core)
        }
        None => studies::write_rows(&rows, io::stdout().lock()).map_err(CliError::from_core),
    }
}

fn print_json(v: Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(CliError::compute)?).map_err(CliError::usage)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(CliError::compute)?;
    }
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Distance(a) => print_json(cmd_distance(a)?),
        Command::Flow(a) => print_json(cmd_flow(a)?),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
