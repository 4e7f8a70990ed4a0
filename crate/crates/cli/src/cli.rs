use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use swmor::gramians::{existence_check, infinite_gramians_direct, infinite_gramians_series, GramianSet, Levels};
use swmor::h2::{h2_error_with, h2_norm, H2Method};
use swmor::random::seeded;
use swmor::reduction::{balanced_truncation, swirka_with, Method, ReductionResult, SwirkaOptions};
use swmor::sim::{random_switching, simulate, InputSignal, Integrator, SimulationTrace, DEFAULT_STEP};
use swmor::{LssModel, SwitchingSignal};

use crate::bench::{fmt_f64, run_benchmark, BenchmarkSpec};
use crate::modelfile::ModelFile;
use crate::Status;

#[derive(Debug, Parser)]
#[command(name = "swmor", version, about = "Gramians, H2 norms, reduction and simulation of linear switched systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled Gramians, residuals and the existence check.
    Gramians(GramiansArgs),
    /// H2 norm, or the relative H2 error between two models.
    H2(H2Args),
    /// Reduce a model with Sw-IRKA or balanced truncation.
    Reduce(ReduceArgs),
    /// Simulate the outputs along a switching signal.
    Simulate(SimulateArgs),
    /// Run a benchmark file and write its CSV tables.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GramianMethod {
    Series,
    Direct,
}

#[derive(Debug, Args)]
pub struct GramiansArgs {
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "direct")]
    pub method: GramianMethod,
    #[arg(long, default_value_t = swmor::gramians::DEFAULT_TOL)]
    pub tol: f64,
    /// Maximum number of series levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Maximum fixed-point sweeps of the direct method.
    #[arg(long, default_value_t = swmor::gramians::DEFAULT_ITER_MAX)]
    pub iter_max: usize,
}

#[derive(Debug, Args)]
pub struct H2Args {
    #[arg(required_unless_present = "error")]
    pub model: Option<PathBuf>,
    /// Relative error `||a - b|| / ||a||`.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "model")]
    pub error: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReduceMethod {
    Swirka,
    Bt,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "swirka")]
    pub method: ReduceMethod,
    /// Reduced order per mode, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub orders: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub iter_max: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Where to write the reduced model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMethod {
    Rk4,
    Expm,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: PathBuf,
    /// Mode and dwell pairs, e.g. `1:1,2:1`.
    #[arg(long, required_unless_present = "random_switching", conflicts_with = "random_switching")]
    pub signal: Option<String>,
    /// Random switching on `[0, T]` starting in mode 1: `T,seed`.
    #[arg(long)]
    pub random_switching: Option<String>,
    /// `demo`, `zero`, `const:V`, `impulse:W` or `file:PATH` (CSV of time and input columns).
    #[arg(long, default_value = "demo")]
    pub input: String,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, value_enum, default_value = "rk4")]
    pub method: SimMethod,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Append the input columns `u_1..u_m`.
    #[arg(long)]
    pub with_input: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    pub spec: PathBuf,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Status> {
    let mut report = String::new();
    let status = match &cli.command {
        Command::Gramians(a) => gramians_cmd(a, &mut report)?,
        Command::H2(a) => h2_cmd(a, &mut report)?,
        Command::Reduce(a) => reduce_cmd(a, &mut report)?,
        Command::Simulate(a) => simulate_cmd(a, &mut report)?,
        Command::Benchmark(a) => benchmark_cmd(a, &mut report)?,
    };
    out.write_all(report.as_bytes())?;
    Ok(status)
}

fn status(converged: bool) -> Status {
    if converged {
        Status::Done
    } else {
        Status::NotConverged
    }
}

fn header(file: &ModelFile, path: &Path, out: &mut String) -> Result<()> {
    writeln!(out, "model: {}", file.name.as_deref().unwrap_or(&path.display().to_string()))?;
    let states: Vec<String> = file.model.modes().iter().map(|m| m.states().to_string()).collect();
    writeln!(out, "modes: {} (states {})", file.model.num_modes(), states.join(","))?;
    Ok(())
}

fn gramians_cmd(args: &GramiansArgs, out: &mut String) -> Result<Status> {
    let file = ModelFile::read(&args.model)?;
    let model = &file.model;
    header(&file, &args.model, out)?;
    let set: GramianSet = match args.method {
        GramianMethod::Series => infinite_gramians_series(model, args.tol, args.levels.unwrap_or(200))?,
        GramianMethod::Direct => {
            if args.levels.is_some() {
                bail!("--levels applies to the series method only");
            }
            infinite_gramians_direct(model, args.tol, args.iter_max)?
        }
    };
    let used = match set.levels_used {
        Levels::Finite(k) => format!("{k} levels"),
        Levels::Infinite => format!("direct, {} sweeps", set.iterations),
    };
    writeln!(out, "method: {:?} ({used})", args.method)?;
    for q in 0..model.num_modes() {
        let i = q + 1;
        writeln!(
            out,
            "mode {i}: trace(P_{i}) = {}  trace(Q_{i}) = {}  residual_P = {:.3e}  residual_Q = {:.3e}",
            set.p[q].trace(),
            set.q[q].trace(),
            set.residuals.p[q],
            set.residuals.q[q],
        )?;
    }
    writeln!(out, "converged: {}", set.converged)?;
    let ex = existence_check(model)?;
    writeln!(
        out,
        "existence: alpha = {}  beta = {}{}  max ||K|| = {}  bound = {}  satisfied = {}",
        ex.alpha,
        ex.beta,
        if ex.beta_reliable { "" } else { " (unreliable)" },
        ex.k_norm,
        ex.bound,
        ex.satisfied
    )?;
    Ok(status(set.converged))
}

fn h2_cmd(args: &H2Args, out: &mut String) -> Result<Status> {
    if let Some(paths) = &args.error {
        let (pa, pb) = (&paths[0], &paths[1]);
        let (a, b) = (ModelFile::read(pa)?, ModelFile::read(pb)?);
        header(&a, pa, out)?;
        writeln!(out, "against: {}", b.name.as_deref().unwrap_or(&pb.display().to_string()))?;
        let rep = h2_error_with(&a.model, &b.model, H2Method::Both)?;
        writeln!(out, "norm: {}", rep.reference.norm)?;
        writeln!(out, "error norm: {}", rep.error.norm)?;
        writeln!(out, "relative error: {:.6e}", rep.relative)?;
        writeln!(out, "duality gap: {:.3e}", rep.error.duality_gap.unwrap_or(0.0))?;
        let converged = [&rep.error, &rep.reference].iter().all(|r| r.gramian_meta.is_none_or(|m| m.converged));
        writeln!(out, "gramians converged: {converged}")?;
        return Ok(status(converged));
    }
    let path = args.model.as_ref().ok_or_else(|| anyhow!("no model given"))?;
    let file = ModelFile::read(path)?;
    header(&file, path, out)?;
    let res = h2_norm(&file.model, H2Method::Both)?;
    writeln!(out, "norm^2: {}", res.norm_sq)?;
    writeln!(out, "norm: {}", res.norm)?;
    writeln!(out, "duality gap: {:.3e}", res.duality_gap.unwrap_or(0.0))?;
    let converged = res.gramian_meta.is_none_or(|m| m.converged);
    writeln!(out, "gramians converged: {converged}")?;
    Ok(status(converged))
}

fn reduce_cmd(args: &ReduceArgs, out: &mut String) -> Result<Status> {
    let file = ModelFile::read(&args.model)?;
    let model = &file.model;
    header(&file, &args.model, out)?;
    let res: ReductionResult = match args.method {
        ReduceMethod::Swirka => {
            let d = SwirkaOptions::default();
            let opts = SwirkaOptions {
                eps: args.eps.unwrap_or(d.eps),
                iter_max: args.iter_max.unwrap_or(d.iter_max),
                restarts: args.restarts.unwrap_or(d.restarts),
                ..d
            };
            swirka_with(model, &args.orders, args.seed, &opts)?
        }
        ReduceMethod::Bt => balanced_truncation(model, &args.orders)?,
    };
    let orders: Vec<String> = res.orders.iter().map(usize::to_string).collect();
    writeln!(out, "method: {:?}", args.method)?;
    writeln!(out, "orders: {}", orders.join(","))?;
    if res.method == Method::SwIrka {
        writeln!(out, "seed: {}", args.seed)?;
        writeln!(out, "iterations: {}", res.iterations)?;
        writeln!(out, "restarts: {}", res.restarts_used)?;
        writeln!(out, "final offset: {:.6e}", res.final_offset().unwrap_or(f64::NAN))?;
    } else {
        for (q, sv) in res.singular_values.iter().enumerate() {
            let s: Vec<String> = sv.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(out, "mode {} singular values: {}", q + 1, s.join(" "))?;
        }
    }
    writeln!(out, "converged: {}", res.converged)?;
    writeln!(out, "reduced stable: {}", res.reduced_stable)?;
    let err = swmor::h2::h2_error(model, &res.reduced)?;
    writeln!(out, "relative H2 error: {:.6e}", err.relative)?;
    if let Some(path) = &args.out {
        let name = format!("{} reduced to {}", file.name.as_deref().unwrap_or("model"), orders.join(","));
        let reduced = ModelFile { name: Some(name), description: file.description.clone(), model: res.reduced };
        reduced.write(path)?;
        writeln!(out, "written: {}", path.display())?;
    }
    Ok(status(res.converged))
}

/// `1:1.5,2:0.5`: one-based mode labels with dwell times.
pub fn parse_signal(text: &str, modes: usize) -> Result<SwitchingSignal> {
    let events = text
        .split(',')
        .map(|item| {
            let (q, t) = item.split_once(':').ok_or_else(|| anyhow!("signal item {item:?} is not MODE:DWELL"))?;
            let q: usize = q.trim().parse().with_context(|| format!("signal item {item:?}: bad mode"))?;
            let t: f64 = t.trim().parse().with_context(|| format!("signal item {item:?}: bad dwell time"))?;
            if q == 0 || q > modes {
                bail!("signal item {item:?}: mode {q} does not exist (modes are 1..={modes})");
            }
            Ok((q - 1, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SwitchingSignal::new(events)?)
}

pub fn parse_input(text: &str) -> Result<InputSignal> {
    let (kind, arg) = text.split_once(':').unwrap_or((text, ""));
    let number =
        |what: &str| -> Result<f64> { arg.parse().with_context(|| format!("--input {kind}: bad {what} {arg:?}")) };
    Ok(match kind {
        "demo" => InputSignal::Demo,
        "zero" => InputSignal::Zero,
        "const" => InputSignal::Constant(number("value")?),
        "impulse" => {
            let width = number("width")?;
            if !(width > 0.0 && width.is_finite()) {
                bail!("--input impulse: width must be positive");
            }
            InputSignal::ImpulseApprox { width }
        }
        "file" => read_input_csv(Path::new(arg))?,
        _ => bail!("unknown input {text:?}; expected demo, zero, const:V, impulse:W or file:PATH"),
    })
}

/// CSV with a header row; the first column is time, the rest are channels.
fn read_input_csv(path: &Path) -> Result<InputSignal> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("in {}", path.display()))?;
        let nums = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: data row {}", path.display(), i + 1))?;
        if nums.len() < 2 {
            bail!("{}: data row {} needs a time and at least one channel", path.display(), i + 1);
        }
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    InputSignal::sampled(times, values).with_context(|| format!("in {}", path.display()))
}

pub fn trace_csv(trace: &SimulationTrace, model: &LssModel, input: Option<&InputSignal>) -> String {
    let p = trace.outputs.first().map_or(0, |y| y.len());
    let m = model.mode(0).inputs();
    let mut out = String::from("time,mode");
    for i in 1..=p {
        let _ = write!(out, ",y_{i}");
    }
    if input.is_some() {
        for i in 1..=m {
            let _ = write!(out, ",u_{i}");
        }
    }
    out.push('\n');
    for k in 0..trace.times.len() {
        let t = trace.times[k];
        let _ = write!(out, "{},{}", fmt_f64(t), trace.active_mode[k] + 1);
        for v in trace.outputs[k].iter() {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        if let Some(u) = input {
            for v in u.eval(t, m).iter() {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    out
}

fn simulate_cmd(args: &SimulateArgs, out: &mut String) -> Result<Status> {
    let file = ModelFile::read(&args.model)?;
    let model = &file.model;
    let signal = match (&args.signal, &args.random_switching) {
        (Some(s), _) => parse_signal(s, model.num_modes())?,
        (None, Some(r)) => {
            let (t, seed) = r.split_once(',').ok_or_else(|| anyhow!("--random-switching expects T,seed"))?;
            let t: f64 = t.trim().parse().context("--random-switching: bad horizon")?;
            let seed: u64 = seed.trim().parse().context("--random-switching: bad seed")?;
            random_switching(model.num_modes(), t, 0, &mut seeded(seed))?
        }
        (None, None) => bail!("give --signal or --random-switching"),
    };
    let input = parse_input(&args.input)?;
    if let Some(ch) = input.channels() {
        let m = model.mode(0).inputs();
        if ch < m {
            bail!("input file has {ch} channels, the model needs {m}");
        }
    }
    if !(args.step > 0.0 && args.step.is_finite()) {
        bail!("--step must be positive");
    }
    let method = match args.method {
        SimMethod::Rk4 => Integrator::Rk4,
        SimMethod::Expm => Integrator::Expm,
    };
    let trace = simulate(model, &signal, &input, args.step, method)?;
    let csv = trace_csv(&trace, model, args.with_input.then_some(&input));
    match &args.out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            writeln!(out, "samples: {}", trace.times.len())?;
            writeln!(out, "switches: {}", trace.switch_indices.len())?;
            writeln!(out, "written: {}", path.display())?;
        }
        None => out.push_str(&csv),
    }
    Ok(Status::Done)
}

fn benchmark_cmd(args: &BenchmarkArgs, out: &mut String) -> Result<Status> {
    let spec = BenchmarkSpec::read(&args.spec)?;
    let outcome = run_benchmark(&spec)?;
    writeln!(out, "{:>4} {:>14} {:>14} {:>6} {:>9}", "r", "rel_err_bt", "rel_err_swirka", "iters", "converged")?;
    for row in &outcome.rows {
        writeln!(
            out,
            "{:>4} {:>14.6e} {:>14.6e} {:>6} {:>9}",
            row.order, row.rel_err_bt, row.rel_err_swirka, row.swirka_iters, row.converged
        )?;
    }
    writeln!(out, "written: {}", spec.results_csv.display())?;
    writeln!(out, "written: {}", spec.convergence_csv.display())?;
    if let Some(p) = &spec.trace_csv {
        writeln!(out, "written: {}", p.display())?;
    }
    Ok(status(outcome.all_converged))
}
