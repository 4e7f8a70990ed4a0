//! Benchmark harness: build a switched system from one linear system by
//! input/output selection, reduce it at several orders with balanced
//! truncation and Sw-IRKA, and write the errors and convergence histories.
//!
//! ```toml
//! orders = [5, 10]
//! seed = 1
//! horizon = 10.0
//! results_csv = "results.csv"
//! convergence_csv = "convergence.csv"
//!
//! [source]
//! kind = "matrix_market"
//! a = "cdplayer_A.mtx"
//! b = "cdplayer_B.mtx"
//! c = "cdplayer_C.mtx"
//! ```
//!
//! Relative paths resolve against the directory of the benchmark file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use swmor::h2::h2_error;
use swmor::random::{gaussian, seeded, stable_matrix};
use swmor::reduction::{balanced_truncation, swirka_with, SwirkaOptions};
use swmor::sim::{random_switching, simulate, InputSignal, Integrator, DEFAULT_STEP};
use swmor::{LssModel, Matrix, Mode};

use crate::mtx::read_mtx;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SWMOR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Mode `j` uses only input `j` and output `j`.
    Keep,
    /// Mode `j` loses input `j` and output `j` and keeps the rest.
    #[default]
    Drop,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    MatrixMarket { a: PathBuf, b: PathBuf, c: PathBuf },
    Synthetic { states: usize, inputs: usize, outputs: usize, seed: u64 },
}

fn default_modes() -> usize {
    2
}

fn default_horizon() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub source: Source,
    pub orders: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub iter_max: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub results_csv: PathBuf,
    pub convergence_csv: PathBuf,
    /// Outputs of the full and both reduced models (largest order) along a
    /// random switching signal with the demo input.
    #[serde(default)]
    pub trace_csv: Option<PathBuf>,
}

impl BenchmarkSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut spec: BenchmarkSpec =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("benchmark file {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve(base);
        Ok(spec)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Source::MatrixMarket { a, b, c } = &mut self.source {
            fix(a);
            fix(b);
            fix(c);
        }
        fix(&mut self.results_csv);
        fix(&mut self.convergence_csv);
        if let Some(t) = &mut self.trace_csv {
            fix(t);
        }
    }

    pub fn options(&self) -> SwirkaOptions {
        let d = SwirkaOptions::default();
        SwirkaOptions {
            eps: self.eps.unwrap_or(d.eps),
            iter_max: self.iter_max.unwrap_or(d.iter_max),
            restarts: self.restarts.unwrap_or(d.restarts),
            ..d
        }
    }
}

/// Source system `(A, B, C)`.
pub fn load_source(source: &Source) -> Result<(Matrix, Matrix, Matrix)> {
    match source {
        Source::MatrixMarket { a, b, c } => Ok((read_mtx(a)?, read_mtx(b)?, read_mtx(c)?)),
        Source::Synthetic { states, inputs, outputs, seed } => {
            let mut rng = seeded(*seed);
            let a = stable_matrix(*states, 0.0, &mut rng);
            let b = gaussian(*states, *inputs, &mut rng);
            let c = gaussian(*outputs, *states, &mut rng);
            Ok((a, b, c))
        }
    }
}

/// Switched system whose modes share `A` and differ in which inputs and
/// outputs are active; couplings are identities.
pub fn select_modes(a: &Matrix, b: &Matrix, c: &Matrix, modes: usize, rule: Selection) -> Result<LssModel> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n {
        bail!("source matrices are not conformal: A {:?}, B {:?}, C {:?}", a.shape(), b.shape(), c.shape());
    }
    if modes < 2 {
        bail!("need at least two modes, got {modes}");
    }
    if b.ncols() < modes || c.nrows() < modes {
        bail!("source has {} inputs and {} outputs; {modes} modes need at least {modes} of each", b.ncols(), c.nrows());
    }
    let mode = |j: usize| match rule {
        Selection::Keep => Mode::new(a.clone(), b.columns(j, 1).into_owned(), c.rows(j, 1).into_owned()),
        Selection::Drop => Mode::new(a.clone(), b.clone().remove_column(j), c.clone().remove_row(j)),
    };
    Ok(LssModel::new((0..modes).map(mode).collect(), vec![])?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderResult {
    pub order: usize,
    pub rel_err_bt: f64,
    pub rel_err_swirka: f64,
    pub swirka_iters: usize,
    pub converged: bool,
    pub offsets: Vec<f64>,
    pub bt: Option<LssModel>,
    pub swirka: Option<LssModel>,
}

/// Relative H2 error, NaN when it cannot be evaluated (an unstable reduced
/// mode, or couplings for which the error Gramians do not exist).
fn relative_error(model: &LssModel, reduced: &LssModel, what: &str, r: usize) -> f64 {
    match h2_error(model, reduced) {
        Ok(rep) => rep.relative,
        Err(e) => {
            log::warn!("order {r}: {what} error not available: {e}");
            f64::NAN
        }
    }
}

fn run_order(model: &LssModel, r: usize, seed: u64, opts: &SwirkaOptions) -> Result<OrderResult> {
    let orders = vec![r; model.num_modes()];
    let bt = balanced_truncation(model, &orders)?;
    let rel_err_bt = relative_error(model, &bt.reduced, "balanced truncation", r);
    let (rel_err_swirka, swirka_iters, converged, offsets, reduced) = match swirka_with(model, &orders, seed, opts) {
        Ok(res) => {
            let err = relative_error(model, &res.reduced, "Sw-IRKA", r);
            (err, res.iterations, res.converged, res.history, Some(res.reduced))
        }
        Err(e) => {
            log::warn!("order {r}: Sw-IRKA failed: {e}");
            (f64::NAN, 0, false, Vec::new(), None)
        }
    };
    Ok(OrderResult {
        order: r,
        rel_err_bt,
        rel_err_swirka,
        swirka_iters,
        converged,
        offsets,
        bt: Some(bt.reduced),
        swirka: reduced,
    })
}

fn thread_count() -> Option<usize> {
    let v = std::env::var(THREADS_ENV).ok()?;
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            log::warn!("ignoring {THREADS_ENV}={v:?}");
            None
        }
    }
}

/// Runs every order; results come back in the order of `spec.orders`
/// whatever the scheduling.
pub fn run_orders(model: &LssModel, spec: &BenchmarkSpec) -> Result<Vec<OrderResult>> {
    let opts = spec.options();
    let work = || -> Result<Vec<OrderResult>> {
        spec.orders.par_iter().map(|&r| run_order(model, r, spec.seed, &opts)).collect()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count() {
        builder = builder.num_threads(n);
    }
    builder.build().context("starting worker threads")?.install(work)
}

pub fn results_csv(rows: &[OrderResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "rel_err_bt", "rel_err_swirka", "swirka_iters", "converged"])?;
    for row in rows {
        w.write_record([
            row.order.to_string(),
            fmt_f64(row.rel_err_bt),
            fmt_f64(row.rel_err_swirka),
            row.swirka_iters.to_string(),
            row.converged.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn convergence_csv(rows: &[OrderResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", "iteration", "offset"])?;
    for row in rows {
        for (i, off) in row.offsets.iter().enumerate() {
            w.write_record([row.order.to_string(), (i + 1).to_string(), fmt_f64(*off)])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn trace_csv(model: &LssModel, largest: &OrderResult, spec: &BenchmarkSpec) -> Result<String> {
    let signal = random_switching(model.num_modes(), spec.horizon, 0, &mut seeded(spec.seed))?;
    let run = |m: &LssModel| simulate(m, &signal, &InputSignal::Demo, DEFAULT_STEP, Integrator::Expm);
    let full = run(model)?;
    let reduced: Vec<(&str, _)> = [("bt", &largest.bt), ("swirka", &largest.swirka)]
        .into_iter()
        .filter_map(|(name, m)| m.as_ref().map(|m| (name, m)))
        .map(|(name, m)| Ok((name, run(m)?)))
        .collect::<Result<_>>()?;
    let p = model.mode(0).outputs();
    let mut out = String::from("time,mode");
    for i in 1..=p {
        write!(out, ",y_{i}")?;
    }
    for (name, _) in &reduced {
        for i in 1..=p {
            write!(out, ",y_{name}_{i}")?;
        }
    }
    out.push('\n');
    for k in 0..full.times.len() {
        write!(out, "{},{}", fmt_f64(full.times[k]), full.active_mode[k] + 1)?;
        for v in full.outputs[k].iter() {
            write!(out, ",{}", fmt_f64(*v))?;
        }
        for (_, tr) in &reduced {
            for v in tr.outputs[k].iter() {
                write!(out, ",{}", fmt_f64(*v))?;
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub rows: Vec<OrderResult>,
    pub all_converged: bool,
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkOutcome> {
    if spec.orders.is_empty() {
        bail!("benchmark lists no orders");
    }
    let (a, b, c) = load_source(&spec.source)?;
    let model = select_modes(&a, &b, &c, spec.modes, spec.selection)?;
    let n = a.nrows();
    if let Some(&r) = spec.orders.iter().find(|&&r| r == 0 || r > n) {
        bail!("order {r} not in 1..={n}");
    }
    let rows = run_orders(&model, spec)?;
    write_file(&spec.results_csv, &results_csv(&rows)?)?;
    write_file(&spec.convergence_csv, &convergence_csv(&rows)?)?;
    if let Some(path) = &spec.trace_csv {
        let largest = rows.iter().max_by_key(|r| r.order).expect("orders are non-empty");
        write_file(path, &trace_csv(&model, largest, spec)?)?;
    }
    let all_converged = rows.iter().all(|r| r.converged);
    Ok(BenchmarkOutcome { rows, all_converged })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> (Matrix, Matrix, Matrix) {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let b = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let c = Matrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        (a, b, c)
    }

    #[test]
    fn keep_selects_own_channel() {
        let (a, b, c) = source();
        let m = select_modes(&a, &b, &c, 2, Selection::Keep).unwrap();
        assert_eq!(m.mode(0).b, Matrix::from_column_slice(2, 1, &[1.0, 3.0]));
        assert_eq!(m.mode(1).c, Matrix::from_row_slice(1, 2, &[7.0, 8.0]));
    }

    #[test]
    fn drop_removes_own_channel() {
        let (a, b, c) = source();
        let m = select_modes(&a, &b, &c, 2, Selection::Drop).unwrap();
        assert_eq!(m.mode(0).b, Matrix::from_column_slice(2, 1, &[2.0, 4.0]));
        assert_eq!(m.mode(1).c, Matrix::from_row_slice(1, 2, &[5.0, 6.0]));
    }

    #[test]
    fn too_few_channels() {
        let (a, b, c) = source();
        let err = select_modes(&a, &b.columns(0, 1).into_owned(), &c, 2, Selection::Drop).unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn spec_defaults() {
        let spec: BenchmarkSpec = toml::from_str(
            "orders = [2]\nresults_csv = \"r.csv\"\nconvergence_csv = \"c.csv\"\n\
             [source]\nkind = \"synthetic\"\nstates = 4\ninputs = 2\noutputs = 2\nseed = 1\n",
        )
        .unwrap();
        assert_eq!(spec.selection, Selection::Drop);
        assert_eq!(spec.modes, 2);
        assert_eq!(spec.options(), SwirkaOptions::default());
    }

    #[test]
    fn csv_formatting() {
        let row = OrderResult {
            order: 5,
            rel_err_bt: 0.1,
            rel_err_swirka: 1.0 / 3.0,
            swirka_iters: 7,
            converged: true,
            offsets: vec![1.0, 0.5],
            bt: None,
            swirka: None,
        };
        let text = results_csv(std::slice::from_ref(&row)).unwrap();
        assert_eq!(
            text,
            "r,rel_err_bt,rel_err_swirka,swirka_iters,converged\n\
             5,1.0000000000000001e-1,3.3333333333333331e-1,7,true\n"
        );
        assert_eq!(convergence_csv(&[row]).unwrap().lines().count(), 3);
    }
}
