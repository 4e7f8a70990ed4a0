//! Controllability and observability Gramians of a linear switched system.
//!
//! The controllability Gramian `P_q` collects the energy of every switching
//! sequence that ends in mode `q`; it solves the coupled equations
//!
//! ```text
//! A_q P_q + P_q A_q^T + sum_{s != q} K_{s,q} P_s K_{s,q}^T + B_q B_q^T = 0
//! ```
//!
//! and the observability Gramian `Q_q` (sequences starting in `q`) solves
//!
//! ```text
//! A_q^T Q_q + Q_q A_q + sum_{s != q} K_{q,s}^T Q_s K_{q,s} + C_q^T C_q = 0.
//! ```
//!
//! `K_{q,s}` is the reset applied when switching from `q` to `s`.
//! The level-k Gramians `P_q^(k)` restrict the sums to sequences of length k;
//! their sum over k is the infinite Gramian.

use log::warn;

use crate::error::{LssError, Result};
use crate::linalg;
use crate::lyap::LyapunovSolver;
use crate::model::{self, LssModel, Matrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_H_MAX: usize = 200;
pub const DEFAULT_ITER_MAX: usize = 500;

/// Number of consecutive growing level traces treated as divergence.
const DIVERGENCE_STREAK: usize = 3;

/// Eigenvector conditioning above which the transient bound is unreliable.
const DEFECTIVE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Levels {
    Finite(usize),
    /// Direct solve of the coupled equations.
    Infinite,
}

/// Per-equation relative residuals of the coupled Lyapunov system.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Residuals {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.p.iter().chain(&self.q).copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianSet {
    pub p: Vec<Matrix>,
    pub q: Vec<Matrix>,
    pub levels_used: Levels,
    /// Series levels or fixed-point sweeps performed.
    pub iterations: usize,
    pub residuals: Residuals,
    pub converged: bool,
}

impl GramianSet {
    pub fn meta(&self) -> GramianMeta {
        GramianMeta {
            levels_used: self.levels_used,
            iterations: self.iterations,
            max_residual: self.residuals.max(),
            converged: self.converged,
        }
    }
}

/// Convergence summary carried by downstream results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramianMeta {
    pub levels_used: Levels,
    pub iterations: usize,
    pub max_residual: f64,
    pub converged: bool,
}

/// Gramians of one level `k`, for every mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGramians {
    pub level: usize,
    pub p: Vec<Matrix>,
    pub q: Vec<Matrix>,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceReport {
    /// Decay rate `-max Re lambda(A_D)`.
    pub alpha: f64,
    /// Transient growth constant, the eigenvector condition number of `A_D`.
    pub beta: f64,
    pub beta_reliable: bool,
    /// Largest coupling spectral norm.
    pub k_norm: f64,
    /// `sqrt(2 alpha) / beta`, zero when `alpha <= 0`.
    pub bound: f64,
    pub satisfied: bool,
}

/// Cached Lyapunov solvers, one per mode. Stability is checked on creation.
pub struct ModeSolvers(Vec<LyapunovSolver>);

impl ModeSolvers {
    pub fn new(model: &LssModel) -> Result<Self> {
        model::require_stable(model)?;
        model.modes().iter().map(|m| LyapunovSolver::new(&m.a)).collect::<Result<Vec<_>>>().map(ModeSolvers)
    }
}

fn ctrl_coupling(model: &LssModel, q: usize, p: &[Matrix]) -> Matrix {
    let n = model.states(q);
    let mut acc = Matrix::zeros(n, n);
    for s in (0..model.num_modes()).filter(|&s| s != q) {
        let k = model.coupling(s, q);
        acc += k * &p[s] * k.transpose();
    }
    acc
}

fn obs_coupling(model: &LssModel, q: usize, qs: &[Matrix]) -> Matrix {
    let n = model.states(q);
    let mut acc = Matrix::zeros(n, n);
    for s in (0..model.num_modes()).filter(|&s| s != q) {
        let k = model.coupling(q, s);
        acc += k.transpose() * &qs[s] * k;
    }
    acc
}

fn ctrl_input(model: &LssModel, q: usize) -> Matrix {
    let b = &model.mode(q).b;
    b * b.transpose()
}

fn obs_input(model: &LssModel, q: usize) -> Matrix {
    let c = &model.mode(q).c;
    c.transpose() * c
}

fn relative(res: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        res
    } else {
        res / scale
    }
}

fn ctrl_residual(model: &LssModel, q: usize, pq: &Matrix, forcing: &Matrix) -> f64 {
    let a = &model.mode(q).a;
    relative((a * pq + pq * a.transpose() + forcing).norm(), forcing.norm())
}

fn obs_residual(model: &LssModel, q: usize, qq: &Matrix, forcing: &Matrix) -> f64 {
    let a = &model.mode(q).a;
    relative((a.transpose() * qq + qq * a + forcing).norm(), forcing.norm())
}

/// Residuals of the full coupled equations for a candidate Gramian pair.
pub fn coupled_residuals(model: &LssModel, p: &[Matrix], q: &[Matrix]) -> Residuals {
    let m = model.num_modes();
    Residuals {
        p: (0..m)
            .map(|i| ctrl_residual(model, i, &p[i], &(ctrl_input(model, i) + ctrl_coupling(model, i, p))))
            .collect(),
        q: (0..m).map(|i| obs_residual(model, i, &q[i], &(obs_input(model, i) + obs_coupling(model, i, q)))).collect(),
    }
}

/// Linear (no switching) Gramians of mode `q`.
pub fn linear_gramians(model: &LssModel, q: usize) -> Result<(Matrix, Matrix)> {
    model::ensure_valid(model)?;
    if q >= model.num_modes() {
        return Err(LssError::validation(format!("mode {} does not exist", q + 1)));
    }
    let abscissa = linalg::spectral_abscissa(&model.mode(q).a)?;
    if abscissa >= 0.0 {
        return Err(LssError::UnstableMode { mode: q + 1, abscissa });
    }
    let solver = LyapunovSolver::new(&model.mode(q).a)?;
    Ok((solver.solve(&ctrl_input(model, q))?, solver.solve_transposed(&obs_input(model, q))?))
}

/// Level-k Gramians for `k = 1..=h`.
pub fn level_k_gramians(model: &LssModel, h: usize) -> Result<Vec<LevelGramians>> {
    if h == 0 {
        return Err(LssError::validation("number of levels must be at least 1"));
    }
    let solvers = ModeSolvers::new(model)?;
    let mut out: Vec<LevelGramians> = Vec::with_capacity(h);
    for level in 1..=h {
        out.push(next_level(model, &solvers, out.last(), level)?);
    }
    Ok(out)
}

fn next_level(
    model: &LssModel,
    solvers: &ModeSolvers,
    prev: Option<&LevelGramians>,
    level: usize,
) -> Result<LevelGramians> {
    let m = model.num_modes();
    let mut p = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut residuals = Residuals::default();
    for i in 0..m {
        let (fp, fq) = match prev {
            None => (ctrl_input(model, i), obs_input(model, i)),
            Some(prev) => (ctrl_coupling(model, i, &prev.p), obs_coupling(model, i, &prev.q)),
        };
        let pi = solvers.0[i].solve(&fp)?;
        let qi = solvers.0[i].solve_transposed(&fq)?;
        residuals.p.push(ctrl_residual(model, i, &pi, &fp));
        residuals.q.push(obs_residual(model, i, &qi, &fq));
        p.push(pi);
        q.push(qi);
    }
    Ok(LevelGramians { level, p, q, residuals })
}

fn total_trace(ms: &[Matrix]) -> f64 {
    ms.iter().map(|m| m.trace()).sum()
}

/// Tracks consecutive growth of a nonnegative sequence.
#[derive(Default)]
struct GrowthWatch {
    last: Option<f64>,
    streak: usize,
}

impl GrowthWatch {
    /// Returns true once the value has grown `DIVERGENCE_STREAK` times in a row.
    fn push(&mut self, value: f64) -> bool {
        if let Some(last) = self.last {
            if value > last {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.last = Some(value);
        self.streak >= DIVERGENCE_STREAK || !value.is_finite()
    }
}

/// Infinite Gramians approximated by the truncated level sum
/// `P_q ~ sum_{k<=H} P_q^(k)`, stopping once the newest level is negligible.
pub fn infinite_gramians_series(model: &LssModel, tol: f64, h_max: usize) -> Result<GramianSet> {
    if h_max == 0 {
        return Err(LssError::validation("h_max must be at least 1"));
    }
    let solvers = ModeSolvers::new(model)?;
    let m = model.num_modes();
    let mut sum_p: Vec<Matrix> = model.modes().iter().map(|md| Matrix::zeros(md.states(), md.states())).collect();
    let mut sum_q = sum_p.clone();
    let (mut watch_p, mut watch_q) = (GrowthWatch::default(), GrowthWatch::default());
    let mut level: Option<LevelGramians> = None;
    let mut converged = false;
    let mut used = 0;
    for k in 1..=h_max {
        let next = next_level(model, &solvers, level.as_ref(), k)?;
        if k > 1 && next.p.iter().chain(&next.q).all(|x| x.iter().all(|&v| v == 0.0)) {
            // the series terminated exactly at the previous level
            converged = true;
            break;
        }
        for i in 0..m {
            sum_p[i] += &next.p[i];
            sum_q[i] += &next.q[i];
        }
        used = k;
        if watch_p.push(total_trace(&next.p)) || watch_q.push(total_trace(&next.q)) {
            return Err(LssError::Divergence {
                iterations: k,
                what: "level Gramian traces keep growing; coupling norms likely exceed sqrt(2 alpha)/beta".into(),
            });
        }
        let negligible =
            (0..m).all(|i| next.p[i].trace() <= tol * sum_p[i].trace() && next.q[i].trace() <= tol * sum_q[i].trace());
        level = Some(next);
        if negligible {
            converged = true;
            break;
        }
    }
    let residuals = coupled_residuals(model, &sum_p, &sum_q);
    Ok(GramianSet { p: sum_p, q: sum_q, levels_used: Levels::Finite(used), iterations: used, residuals, converged })
}

/// Infinite Gramians by fixed-point iteration on the coupled equations,
/// one standard Lyapunov solve per mode and sweep, starting from the linear
/// Gramians.
pub fn infinite_gramians_direct(model: &LssModel, tol: f64, iter_max: usize) -> Result<GramianSet> {
    let solvers = ModeSolvers::new(model)?;
    let (p, p_iters, p_conv) = fixed_point(model, &solvers, tol, iter_max, Side::Controllability)?;
    let (q, q_iters, q_conv) = fixed_point(model, &solvers, tol, iter_max, Side::Observability)?;
    let residuals = coupled_residuals(model, &p, &q);
    Ok(GramianSet {
        p,
        q,
        levels_used: Levels::Infinite,
        iterations: p_iters.max(q_iters),
        residuals,
        converged: p_conv && q_conv,
    })
}

#[derive(Clone, Copy)]
enum Side {
    Controllability,
    Observability,
}

/// Trace history of the fixed-point iterates, for monotonicity checks.
pub fn direct_trace_history(model: &LssModel, tol: f64, iter_max: usize) -> Result<Vec<f64>> {
    let solvers = ModeSolvers::new(model)?;
    let mut history = Vec::new();
    fixed_point_with(model, &solvers, tol, iter_max, Side::Controllability, |p| history.push(total_trace(p)))?;
    Ok(history)
}

fn fixed_point(
    model: &LssModel,
    solvers: &ModeSolvers,
    tol: f64,
    iter_max: usize,
    side: Side,
) -> Result<(Vec<Matrix>, usize, bool)> {
    fixed_point_with(model, solvers, tol, iter_max, side, |_| {})
}

fn fixed_point_with(
    model: &LssModel,
    solvers: &ModeSolvers,
    tol: f64,
    iter_max: usize,
    side: Side,
    observe: impl FnMut(&[Matrix]),
) -> Result<(Vec<Matrix>, usize, bool)> {
    let inputs: Vec<Matrix> = (0..model.num_modes())
        .map(|i| match side {
            Side::Controllability => ctrl_input(model, i),
            Side::Observability => obs_input(model, i),
        })
        .collect();
    forced_fixed_point(model, solvers, inputs, tol, iter_max, side, observe)
}

/// Solves the coupled equations with an arbitrary symmetric forcing in place
/// of `B_q B_q^T` (or `C_q^T C_q`).
pub fn solve_forced(
    model: &LssModel,
    solvers: &ModeSolvers,
    forcing: Vec<Matrix>,
    observability: bool,
    tol: f64,
    iter_max: usize,
) -> Result<(Vec<Matrix>, bool)> {
    let side = if observability { Side::Observability } else { Side::Controllability };
    let (x, _, converged) = forced_fixed_point(model, solvers, forcing, tol, iter_max, side, |_| {})?;
    Ok((x, converged))
}

fn forced_fixed_point(
    model: &LssModel,
    solvers: &ModeSolvers,
    inputs: Vec<Matrix>,
    tol: f64,
    iter_max: usize,
    side: Side,
    mut observe: impl FnMut(&[Matrix]),
) -> Result<(Vec<Matrix>, usize, bool)> {
    let m = model.num_modes();
    let solve = |i: usize, w: &Matrix| match side {
        Side::Controllability => solvers.0[i].solve(w),
        Side::Observability => solvers.0[i].solve_transposed(w),
    };
    let mut x: Vec<Matrix> = (0..m).map(|i| solve(i, &inputs[i])).collect::<Result<_>>()?;
    observe(&x);
    // increments of the iterates are exactly the level Gramians, so growth of
    // the increment trace is the series divergence signature
    let mut watch = GrowthWatch::default();
    for it in 1..=iter_max {
        let next: Vec<Matrix> = (0..m)
            .map(|i| {
                let coupling = match side {
                    Side::Controllability => ctrl_coupling(model, i, &x),
                    Side::Observability => obs_coupling(model, i, &x),
                };
                solve(i, &(&inputs[i] + coupling))
            })
            .collect::<Result<_>>()?;
        let change = (0..m).map(|i| linalg::rel_diff(&next[i], &x[i])).fold(0.0, f64::max);
        let increment = (total_trace(&next) - total_trace(&x)).abs();
        observe(&next);
        x = next;
        if watch.push(increment) {
            return Err(LssError::Divergence {
                iterations: it,
                what: "fixed-point increments keep growing; coupling norms likely exceed sqrt(2 alpha)/beta".into(),
            });
        }
        if change <= tol {
            return Ok((x, it, true));
        }
    }
    Ok((x, iter_max, false))
}

/// Gramians with the crate defaults (direct method). Logs a warning when the
/// sufficient existence condition fails but still attempts the solve.
pub fn gramians(model: &LssModel) -> Result<GramianSet> {
    if let Ok(report) = existence_check(model) {
        if !report.satisfied {
            warn!(
                "existence condition not met: max ||K|| = {:.3e} > sqrt(2 alpha)/beta = {:.3e}",
                report.k_norm, report.bound
            );
        }
    }
    infinite_gramians_direct(model, DEFAULT_TOL, DEFAULT_ITER_MAX)
}

/// Sufficient condition for the infinite Gramians to exist:
/// `A_D` stable and `max ||K_{q,s}||_2 <= sqrt(2 alpha) / beta`.
pub fn existence_check(model: &LssModel) -> Result<ExistenceReport> {
    let abscissas = model::check_stability(model)?;
    let alpha = -abscissas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // eigenvectors of A_D are block diagonal, so the singular values of the
    // stacked eigenvector matrix are the union over modes
    let (mut smax, mut smin) = (0.0f64, f64::INFINITY);
    for mode in model.modes() {
        let (hi, lo) = linalg::eigenvector_singular_range(&mode.a)?;
        smax = smax.max(hi);
        smin = smin.min(lo);
    }
    let beta = if smin > 0.0 { (smax / smin).max(1.0) } else { f64::INFINITY };
    let beta_reliable = beta <= DEFECTIVE_CONDITION;
    let k_norm = model.coupling_pairs().map(|(q, s)| linalg::spectral_norm(model.coupling(q, s))).fold(0.0, f64::max);
    let bound = if alpha > 0.0 && beta.is_finite() { (2.0 * alpha).sqrt() / beta } else { 0.0 };
    let satisfied = alpha > 0.0 && beta_reliable && k_norm <= bound;
    Ok(ExistenceReport { alpha, beta, beta_reliable, k_norm, bound, satisfied })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use approx::assert_relative_eq;

    fn m1(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_model(k: f64) -> LssModel {
        let mode = Mode::new(m1(-1.0), m1(1.0), m1(1.0));
        LssModel::new(vec![mode.clone(), mode], vec![((0, 1), m1(k)), ((1, 0), m1(k))]).unwrap()
    }

    #[test]
    fn linear_gramian_scalar() {
        let (p, q) = linear_gramians(&scalar_model(0.5), 0).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(q[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn linear_gramian_zero_input() {
        let mode = Mode::new(m1(-1.0), m1(0.0), m1(1.0));
        let model = LssModel::new(vec![mode.clone(), mode], vec![]).unwrap();
        let (p, _) = linear_gramians(&model, 1).unwrap();
        assert_eq!(p[(0, 0)], 0.0);
    }

    #[test]
    fn linear_gramian_diagonal() {
        // p_ij = (b b^T)_ij / (|l_i| + |l_j|)
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let mode = Mode::new(a, Matrix::from_element(2, 1, 1.0), Matrix::from_element(1, 2, 1.0));
        let model = LssModel::new(vec![mode.clone(), mode], vec![]).unwrap();
        let (p, _) = linear_gramians(&model, 0).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.5, 1.0 / 3.0, 1.0 / 3.0, 0.25]);
        assert_relative_eq!(p, expected, epsilon = 1e-14);
    }

    #[test]
    fn unstable_mode_is_ill_posed() {
        let good = Mode::new(m1(-1.0), m1(1.0), m1(1.0));
        let bad = Mode::new(m1(0.5), m1(1.0), m1(1.0));
        let model = LssModel::new(vec![good, bad], vec![]).unwrap();
        assert!(matches!(linear_gramians(&model, 1), Err(LssError::UnstableMode { mode: 2, .. })));
        assert!(level_k_gramians(&model, 2).is_err());
        assert!(infinite_gramians_direct(&model, 1e-10, 10).is_err());
    }

    #[test]
    fn level_recursion_scalar() {
        let levels = level_k_gramians(&scalar_model(0.5), 3).unwrap();
        let expected = [0.5, 1.0 / 16.0, 1.0 / 128.0];
        for (lvl, e) in levels.iter().zip(expected) {
            for q in 0..2 {
                assert_relative_eq!(lvl.p[q][(0, 0)], e, epsilon = 1e-15);
                assert_relative_eq!(lvl.q[q][(0, 0)], e, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_coupling_levels_vanish() {
        let levels = level_k_gramians(&scalar_model(0.0), 4).unwrap();
        for lvl in &levels[1..] {
            assert!(lvl.p.iter().chain(&lvl.q).all(|m| m[(0, 0)] == 0.0));
        }
    }

    #[test]
    fn series_scalar_geometric_sum() {
        let g = infinite_gramians_series(&scalar_model(0.5), 1e-12, 200).unwrap();
        assert!(g.converged);
        for q in 0..2 {
            assert_relative_eq!(g.p[q][(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
            assert_relative_eq!(g.q[q][(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn series_truncated_at_h_max() {
        let g = infinite_gramians_series(&scalar_model(0.5), 1e-12, 3).unwrap();
        assert!(!g.converged);
        assert_eq!(g.levels_used, Levels::Finite(3));
        assert_relative_eq!(g.p[0][(0, 0)], 0.5703125, epsilon = 1e-15);
    }

    #[test]
    fn series_with_zero_coupling_stops_at_one_level() {
        let g = infinite_gramians_series(&scalar_model(0.0), 1e-12, 50).unwrap();
        assert_eq!(g.levels_used, Levels::Finite(1));
        assert!(g.converged);
        assert_relative_eq!(g.p[0][(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn direct_scalar() {
        let g = infinite_gramians_direct(&scalar_model(0.5), 1e-14, 500).unwrap();
        assert!(g.converged);
        assert_relative_eq!(g.p[1][(0, 0)], 4.0 / 7.0, epsilon = 1e-12);
        assert!(g.residuals.max() < 1e-12);
    }

    #[test]
    fn direct_zero_coupling_is_linear() {
        let g = infinite_gramians_direct(&scalar_model(0.0), 1e-10, 500).unwrap();
        assert_eq!(g.iterations, 1);
        assert_eq!(g.p[0][(0, 0)], 0.5);
    }

    #[test]
    fn large_coupling_diverges() {
        let err = infinite_gramians_series(&scalar_model(2.0), 1e-12, 200).unwrap_err();
        assert!(matches!(err, LssError::Divergence { .. }));
        let err = infinite_gramians_direct(&scalar_model(2.0), 1e-12, 200).unwrap_err();
        assert!(matches!(err, LssError::Divergence { .. }));
    }

    #[test]
    fn existence_scalar() {
        let r = existence_check(&scalar_model(0.5)).unwrap();
        assert_relative_eq!(r.alpha, 1.0, epsilon = 1e-14);
        assert_relative_eq!(r.beta, 1.0, epsilon = 1e-14);
        assert_relative_eq!(r.bound, 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(r.k_norm, 0.5, epsilon = 1e-14);
        assert!(r.satisfied);

        let r = existence_check(&scalar_model(2.0)).unwrap();
        assert!(!r.satisfied);
        assert_relative_eq!(r.k_norm, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn existence_zero_coupling() {
        let a = Matrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, -2.0]);
        let mode = Mode::new(a, Matrix::from_element(2, 1, 1.0), Matrix::from_element(1, 2, 1.0));
        let model =
            LssModel::new(vec![mode.clone(), mode], vec![((0, 1), Matrix::zeros(2, 2)), ((1, 0), Matrix::zeros(2, 2))])
                .unwrap();
        let r = existence_check(&model).unwrap();
        assert_relative_eq!(r.alpha, 2.0, epsilon = 1e-12);
        assert!(r.satisfied);
    }

    #[test]
    fn defective_dynamics_fail_conservatively() {
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let mode = Mode::new(a, Matrix::from_element(2, 1, 1.0), Matrix::from_element(1, 2, 1.0));
        let model =
            LssModel::new(vec![mode.clone(), mode], vec![((0, 1), Matrix::zeros(2, 2)), ((1, 0), Matrix::zeros(2, 2))])
                .unwrap();
        let r = existence_check(&model).unwrap();
        assert!(!r.beta_reliable);
        assert!(!r.satisfied);
    }
}
