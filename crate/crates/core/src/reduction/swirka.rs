//! Iterative rational Krylov reduction for switched systems (Sw-IRKA).
//!
//! Each outer iteration solves the two generalized Sylvester equations
//!
//! ```text
//! A_q X_q + X_q Â_q^T + sum_{s != q} K_{s,q} X_s K̂_{s,q}^T + B_q B̂_q^T = 0
//! A_q^T Y_q + Y_q Â_q + sum_{s != q} K_{q,s}^T Y_s K̂_{q,s} + C_q^T Ĉ_q = 0
//! ```
//!
//! by fixed-point sweeps over plain Sylvester solves, orthonormalizes the
//! bases, bi-orthogonalizes `Y` against `X` and projects. It stops when the
//! sorted reduced spectrum moves by at most `eps`.

use log::{debug, warn};
use rand::Rng;

use super::{check_orders, is_stable, project, sorted_spectrum, IterationCheck, Method, ReductionResult};
use crate::error::{LssError, Result};
use crate::gramians;
use crate::linalg;
use crate::lyap::{solve_sylvester_schur, SchurForm};
use crate::model::{self, LssModel, Matrix, Mode};
use crate::random;

const RANK_TOL: f64 = 1e-12;
const BIORTH_COND_MAX: f64 = 1e12;
const DIVERGENCE_STREAK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SwirkaOptions {
    pub eps: f64,
    pub iter_max: usize,
    pub restarts: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
}

impl Default for SwirkaOptions {
    fn default() -> Self {
        SwirkaOptions { eps: 1e-8, iter_max: 200, restarts: 5, inner_tol: 1e-10, inner_max: 300 }
    }
}

/// Random stable starting point: `Â_q = Q diag(d) Q^T` with `d ~ U[-2, -0.2]`,
/// Gaussian `B̂`, `Ĉ`, `K̂` scaled by `1/sqrt(r)`. Couplings are shrunk to
/// half the existence bound of the initial reduced model when larger, so the
/// first inner fixed point converges.
pub fn initial_guess<R: Rng + ?Sized>(model: &LssModel, orders: &[usize], rng: &mut R) -> Result<LssModel> {
    check_orders(model, orders)?;
    let modes: Vec<Mode> = model
        .modes()
        .iter()
        .zip(orders)
        .map(|(mode, &r)| {
            let q = random::orthogonal(r, rng);
            let d = Matrix::from_diagonal(&nalgebra::DVector::from_fn(r, |_, _| rng.random_range(-2.0..-0.2)));
            let scale = 1.0 / (r as f64).sqrt();
            Mode::new(
                &q * d * q.transpose(),
                random::gaussian(r, mode.inputs(), rng) * scale,
                random::gaussian(mode.outputs(), r, rng) * scale,
            )
        })
        .collect();
    let m = model.num_modes();
    let mut couplings = Vec::new();
    for q in 0..m {
        for s in 0..m {
            if q != s {
                let scale = 1.0 / (orders[q].max(orders[s]) as f64).sqrt();
                couplings.push(((q, s), random::gaussian(orders[s], orders[q], rng) * scale));
            }
        }
    }
    let guess = LssModel::new(modes, couplings)?;
    let report = gramians::existence_check(&guess)?;
    let cap = 0.5 * report.bound;
    if report.k_norm > cap && report.k_norm > 0.0 {
        let shrink = cap / report.k_norm;
        return guess.map_couplings(|_, _, k| k * shrink);
    }
    Ok(guess)
}

pub fn swirka(model: &LssModel, orders: &[usize], seed: u64) -> Result<ReductionResult> {
    swirka_with(model, orders, seed, &SwirkaOptions::default())
}

struct Attempt {
    reduced: LssModel,
    x: Vec<Matrix>,
    y: Vec<Matrix>,
    history: Vec<f64>,
    checks: Vec<IterationCheck>,
    converged: bool,
}

impl Attempt {
    fn last_offset(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Failure inside an attempt; carries the last complete iterate if any.
struct Failure {
    reason: LssError,
    partial: Option<Attempt>,
}

/// Schur forms of `A_q` and `A_q^T`, fixed for the whole run.
struct FullSchur {
    a: Vec<SchurForm>,
    at: Vec<SchurForm>,
}

pub fn swirka_with(model: &LssModel, orders: &[usize], seed: u64, opts: &SwirkaOptions) -> Result<ReductionResult> {
    model::require_stable(model)?;
    check_orders(model, orders)?;
    if !(opts.eps > 0.0) || opts.iter_max == 0 || opts.inner_max == 0 {
        return Err(LssError::validation("eps must be positive and iteration limits nonzero"));
    }
    let full = FullSchur {
        a: model.modes().iter().map(|m| SchurForm::new(&m.a)).collect::<Result<_>>()?,
        at: model.modes().iter().map(|m| SchurForm::new(&m.a.transpose())).collect::<Result<_>>()?,
    };
    let mut rng = random::seeded(seed);
    let mut best: Option<Attempt> = None;
    let mut last_reason = None;
    for attempt in 0..=opts.restarts {
        let init = initial_guess(model, orders, &mut rng)?;
        match run_attempt(model, &full, init, opts) {
            Ok(att) => return Ok(finish(att, seed, attempt, orders)),
            Err(fail) => {
                warn!("Sw-IRKA attempt {} failed: {}", attempt + 1, fail.reason);
                if let Some(p) = fail.partial {
                    if best.as_ref().is_none_or(|b| p.last_offset() < b.last_offset()) {
                        best = Some(p);
                    }
                }
                last_reason = Some(fail.reason);
            }
        }
    }
    match best {
        Some(att) => Ok(finish(att, seed, opts.restarts, orders)),
        None => Err(LssError::Numerical(format!(
            "Sw-IRKA failed on all {} attempts: {}",
            opts.restarts + 1,
            last_reason.map(|e| e.to_string()).unwrap_or_default()
        ))),
    }
}

fn finish(att: Attempt, seed: u64, restarts_used: usize, orders: &[usize]) -> ReductionResult {
    let reduced_stable = is_stable(&att.reduced);
    if att.converged && !reduced_stable {
        warn!("Sw-IRKA converged to an unstable reduced model");
    }
    ReductionResult {
        method: Method::SwIrka,
        iterations: att.history.len(),
        reduced: att.reduced,
        x: att.x,
        y: att.y,
        history: att.history,
        checks: att.checks,
        converged: att.converged,
        seed: Some(seed),
        restarts_used,
        reduced_stable,
        singular_values: Vec::new(),
        orders: orders.to_vec(),
    }
}

fn run_attempt(
    model: &LssModel,
    full: &FullSchur,
    init: LssModel,
    opts: &SwirkaOptions,
) -> std::result::Result<Attempt, Failure> {
    let mut state = Attempt {
        x: Vec::new(),
        y: Vec::new(),
        history: Vec::new(),
        checks: Vec::new(),
        converged: false,
        reduced: init,
    };
    let mut prev = sorted_spectrum(&state.reduced).map_err(|reason| Failure { reason, partial: None })?;
    for it in 1..=opts.iter_max {
        let step = iterate(model, full, &state.reduced, opts);
        let (reduced, x, y, check) = match step {
            Ok(v) => v,
            Err(reason) => {
                let partial = if state.x.is_empty() { None } else { Some(state) };
                return Err(Failure { reason, partial });
            }
        };
        let spectrum = match sorted_spectrum(&reduced) {
            Ok(s) => s,
            Err(reason) => return Err(Failure { reason, partial: Some(state) }),
        };
        let offset = linalg::eigenvalue_offset(&prev, &spectrum);
        debug!("Sw-IRKA iteration {it}: offset {offset:.3e}");
        prev = spectrum;
        state.reduced = reduced;
        state.x = x;
        state.y = y;
        state.history.push(offset);
        state.checks.push(check);
        if offset <= opts.eps {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

type Step = (LssModel, Vec<Matrix>, Vec<Matrix>, IterationCheck);

fn iterate(model: &LssModel, full: &FullSchur, reduced: &LssModel, opts: &SwirkaOptions) -> Result<Step> {
    let red_a: Vec<SchurForm> = reduced.modes().iter().map(|m| SchurForm::new(&m.a)).collect::<Result<_>>()?;
    let red_at: Vec<SchurForm> =
        reduced.modes().iter().map(|m| SchurForm::new(&m.a.transpose())).collect::<Result<_>>()?;

    let x_raw = cross_fixed_point(model, reduced, opts, |q, xs| {
        let mode = model.mode(q);
        let mut rhs = &mode.b * reduced.mode(q).b.transpose();
        for s in (0..model.num_modes()).filter(|&s| s != q) {
            rhs += model.coupling(s, q) * &xs[s] * reduced.coupling(s, q).transpose();
        }
        solve_sylvester_schur(&full.a[q], &red_at[q], &rhs)
    })?;
    let y_raw = cross_fixed_point(model, reduced, opts, |q, ys| {
        let mode = model.mode(q);
        let mut rhs = mode.c.transpose() * &reduced.mode(q).c;
        for s in (0..model.num_modes()).filter(|&s| s != q) {
            rhs += model.coupling(q, s).transpose() * &ys[s] * reduced.coupling(q, s);
        }
        solve_sylvester_schur(&full.at[q], &red_a[q], &rhs)
    })?;
    let structure =
        structure_residual(model, reduced, &x_raw, false).max(structure_residual(model, reduced, &y_raw, true));

    let mut xs = Vec::with_capacity(x_raw.len());
    let mut ys = Vec::with_capacity(y_raw.len());
    for (q, (xq, yq)) in x_raw.iter().zip(&y_raw).enumerate() {
        let xo =
            orthonormal_basis(xq).ok_or_else(|| LssError::Numerical(format!("X basis of mode {} lost rank", q + 1)))?;
        let yo =
            orthonormal_basis(yq).ok_or_else(|| LssError::Numerical(format!("Y basis of mode {} lost rank", q + 1)))?;
        let yb = biorthogonalize(&xo, &yo)?;
        xs.push(xo);
        ys.push(yb);
    }
    let biorthogonality = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = x.ncols();
            (y.transpose() * x - Matrix::identity(r, r)).amax()
        })
        .fold(0.0, f64::max);
    let next = project(model, &xs, &ys)?;
    if next.modes().iter().any(|m| !linalg::is_finite(&m.a)) {
        return Err(LssError::Numerical("projected model has non-finite entries".into()));
    }
    Ok((next, xs, ys, IterationCheck { structure, biorthogonality }))
}

/// Jacobi sweeps `Z_q <- solve(q, Z)` from zero until the relative change
/// drops below `inner_tol`.
fn cross_fixed_point(
    model: &LssModel,
    reduced: &LssModel,
    opts: &SwirkaOptions,
    mut solve: impl FnMut(usize, &[Matrix]) -> Result<Matrix>,
) -> Result<Vec<Matrix>> {
    let m = model.num_modes();
    let mut z: Vec<Matrix> = (0..m).map(|q| Matrix::zeros(model.states(q), reduced.states(q))).collect();
    let mut first_increment = None;
    let (mut last_increment, mut streak) = (f64::INFINITY, 0);
    for sweep in 1..=opts.inner_max {
        let next: Vec<Matrix> = (0..m).map(|q| solve(q, &z)).collect::<Result<_>>()?;
        let (mut diff, mut size) = (0.0f64, 0.0f64);
        for (a, b) in next.iter().zip(&z) {
            diff = diff.max((a - b).norm());
            size = size.max(a.norm());
        }
        if !diff.is_finite() {
            return Err(LssError::Divergence { iterations: sweep, what: "inner Sylvester fixed point".into() });
        }
        let first = *first_increment.get_or_insert(diff);
        streak = if diff > last_increment { streak + 1 } else { 0 };
        if streak >= DIVERGENCE_STREAK && diff > first {
            return Err(LssError::Divergence { iterations: sweep, what: "inner Sylvester fixed point".into() });
        }
        last_increment = diff;
        z = next;
        if diff <= opts.inner_tol * size || size == 0.0 {
            return Ok(z);
        }
    }
    Err(LssError::Divergence {
        iterations: opts.inner_max,
        what: "inner Sylvester fixed point did not reach its tolerance".into(),
    })
}

/// Off-diagonal blocks of the residual of the block form of the cross
/// equation evaluated at block-diagonal `Z_D`, relative to `||A_D Z_D||`.
/// Block `(q, p)` with `q != p` collects `sum_s K_{s->q} Z_s K̂_{s->p}^T`
/// (transposed maps for the observability side).
fn structure_residual(model: &LssModel, reduced: &LssModel, z: &[Matrix], transposed: bool) -> f64 {
    let m = model.num_modes();
    let mut off = 0.0;
    let mut scale = 0.0;
    for q in 0..m {
        let a = &model.mode(q).a;
        scale += if transposed { (a.transpose() * &z[q]).norm_squared() } else { (a * &z[q]).norm_squared() };
        for p in (0..m).filter(|&p| p != q) {
            let mut block = Matrix::zeros(model.states(q), reduced.states(p));
            for s in (0..m).filter(|&s| s != q && s != p) {
                if transposed {
                    block += model.coupling(q, s).transpose() * &z[s] * reduced.coupling(p, s);
                } else {
                    block += model.coupling(s, q) * &z[s] * reduced.coupling(s, p).transpose();
                }
            }
            off += block.norm_squared();
        }
    }
    if scale == 0.0 {
        off.sqrt()
    } else {
        (off / scale).sqrt()
    }
}

/// Thin QR basis; `None` on numerical rank loss.
fn orthonormal_basis(z: &Matrix) -> Option<Matrix> {
    let r = z.ncols();
    let qr = z.clone().qr();
    let rd = qr.r().diagonal().abs();
    let max = rd.max();
    if !(max > 0.0) || rd.min() <= RANK_TOL * max {
        return None;
    }
    Some(qr.q().columns(0, r).into_owned())
}

/// `Y (X^T Y)^{-1}`, refused when `X^T Y` is badly conditioned.
fn biorthogonalize(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let m = x.transpose() * y;
    let cond = linalg::condition_number(&m);
    if !(cond <= BIORTH_COND_MAX) {
        return Err(LssError::Numerical(format!("X^T Y has condition {cond:.3e}")));
    }
    let sol =
        m.transpose().lu().solve(&y.transpose()).ok_or_else(|| LssError::Numerical("X^T Y is singular".into()))?;
    Ok(sol.transpose())
}
