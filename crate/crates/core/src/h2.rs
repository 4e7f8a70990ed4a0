//! H2 norms of switched systems, H2 errors between two systems, and a
//! brute-force kernel quadrature used as a test oracle.

use crate::compensated::{lift, DdMatrix};
use crate::error::{LssError, Result};
use crate::gramians::{self, GramianMeta, GramianSet, ModeSolvers};
use crate::linalg;
use crate::model::{self, LssModel, Matrix, Mode};
use crate::quadrature::GaussLaguerre;
use crate::sim;

/// Negative squared norms above `-NEGATIVE_CLAMP * max(1, scale)` are rounded
/// to zero; anything below is reported as a numerical failure.
pub const NEGATIVE_CLAMP: f64 = 1e-12;
pub const DEFAULT_QUAD_POINTS: usize = 60;
pub const ORACLE_MAX_STATES: usize = 6;
pub const ORACLE_MAX_LEVEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H2Via {
    Controllability,
    Observability,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H2Method {
    Controllability,
    Observability,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H2Result {
    pub norm_sq: f64,
    pub norm: f64,
    pub via: H2Via,
    pub gramian_meta: Option<GramianMeta>,
    /// Relative gap between the two trace formulas (method `Both` only).
    pub duality_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct H2ErrorReport {
    pub error: H2Result,
    pub reference: H2Result,
    /// `||a - b|| / ||a||`; infinite when `a` has zero norm but `b` does not.
    pub relative: f64,
}

fn clamp(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_CLAMP * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(LssError::Numerical(format!("squared H2 norm is negative: {value:.3e}")))
    }
}

/// `sum_q trace(C_q P_q C_q^T)` and an absolute scale for clamping.
pub fn controllability_trace(model: &LssModel, p: &[Matrix]) -> (f64, f64) {
    model.modes().iter().zip(p).fold((0.0, 0.0), |(v, s), (mode, p)| {
        let t = (&mode.c * p * mode.c.transpose()).trace();
        (v + t, s + mode.c.norm_squared() * p.norm())
    })
}

/// `sum_q trace(B_q^T Q_q B_q)` and an absolute scale for clamping.
pub fn observability_trace(model: &LssModel, q: &[Matrix]) -> (f64, f64) {
    model.modes().iter().zip(q).fold((0.0, 0.0), |(v, s), (mode, q)| {
        let t = (mode.b.transpose() * q * &mode.b).trace();
        (v + t, s + mode.b.norm_squared() * q.norm())
    })
}

/// H2 norm from precomputed Gramians.
pub fn h2_from_gramians(model: &LssModel, set: &GramianSet, method: H2Method) -> Result<H2Result> {
    let (c_val, c_scale) = controllability_trace(model, &set.p);
    let (o_val, o_scale) = observability_trace(model, &set.q);
    let (norm_sq, via, gap) = match method {
        H2Method::Controllability => (clamp(c_val, c_scale)?, H2Via::Controllability, None),
        H2Method::Observability => (clamp(o_val, o_scale)?, H2Via::Observability, None),
        H2Method::Both => {
            let c = clamp(c_val, c_scale)?;
            let o = clamp(o_val, o_scale)?;
            let denom = c.abs().max(o.abs());
            let gap = if denom == 0.0 { 0.0 } else { (c - o).abs() / denom };
            (c, H2Via::Controllability, Some(gap))
        }
    };
    Ok(H2Result { norm_sq, norm: norm_sq.sqrt(), via, gramian_meta: Some(set.meta()), duality_gap: gap })
}

/// H2 norm through the coupled Gramians (direct method, crate defaults).
pub fn h2_norm(model: &LssModel, method: H2Method) -> Result<H2Result> {
    let set = gramians::gramians(model)?;
    h2_from_gramians(model, &set, method)
}

/// The error system `a - b`: block diagonal dynamics and couplings, stacked
/// inputs, outputs `[C_a, -C_b]`.
pub fn error_system(a: &LssModel, b: &LssModel) -> Result<LssModel> {
    model::ensure_valid(a)?;
    model::ensure_valid(b)?;
    if a.num_modes() != b.num_modes() {
        return Err(LssError::validation(format!("mode counts differ: {} vs {}", a.num_modes(), b.num_modes())));
    }
    let mut problems = Vec::new();
    for (q, (ma, mb)) in a.modes().iter().zip(b.modes()).enumerate() {
        if ma.inputs() != mb.inputs() {
            problems.push(format!("mode {}: {} vs {} inputs", q + 1, ma.inputs(), mb.inputs()));
        }
        if ma.outputs() != mb.outputs() {
            problems.push(format!("mode {}: {} vs {} outputs", q + 1, ma.outputs(), mb.outputs()));
        }
    }
    if !problems.is_empty() {
        return Err(LssError::Validation(problems));
    }
    let modes = a
        .modes()
        .iter()
        .zip(b.modes())
        .map(|(ma, mb)| {
            let (na, nb) = (ma.states(), mb.states());
            let mut bb = Matrix::zeros(na + nb, ma.inputs());
            bb.rows_mut(0, na).copy_from(&ma.b);
            bb.rows_mut(na, nb).copy_from(&mb.b);
            let mut cc = Matrix::zeros(ma.outputs(), na + nb);
            cc.columns_mut(0, na).copy_from(&ma.c);
            cc.columns_mut(na, nb).copy_from(&(-&mb.c));
            Mode::new(linalg::block_diag([&ma.a, &mb.a]), bb, cc)
        })
        .collect();
    let m = a.num_modes();
    let mut couplings = Vec::new();
    for q in 0..m {
        for s in 0..m {
            if q != s {
                couplings.push(((q, s), linalg::block_diag([a.coupling(q, s), b.coupling(q, s)])));
            }
        }
    }
    LssModel::new(modes, couplings)
}

const REFINEMENT_STEPS: usize = 2;
const CORRECTION_TOL: f64 = 1e-13;

/// Coupled-equation residual evaluated in double-double arithmetic.
fn dd_residual(model: &LssModel, x: &[DdMatrix], q: usize, observability: bool) -> Matrix {
    let mode = model.mode(q);
    let mut r = if observability {
        lift(&mode.a.transpose())
            .mul(&x[q])
            .add(&x[q].mul_f64(&mode.a))
            .add(&lift(&mode.c.transpose()).mul_f64(&mode.c))
    } else {
        lift(&mode.a)
            .mul(&x[q])
            .add(&x[q].mul_f64(&mode.a.transpose()))
            .add(&lift(&mode.b).mul_f64(&mode.b.transpose()))
    };
    for s in (0..model.num_modes()).filter(|&s| s != q) {
        let term = if observability {
            let k = model.coupling(q, s);
            lift(&k.transpose()).mul(&x[s]).mul_f64(k)
        } else {
            let k = model.coupling(s, q);
            lift(k).mul(&x[s]).mul_f64(&k.transpose())
        };
        r = r.add(&term);
    }
    r.to_f64()
}

/// Squared norm from a Gramian improved by iterative refinement with
/// double-double residuals and traces. For error systems the plain trace
/// formula loses everything below `sqrt(eps)` of the reference norm to
/// cancellation; refinement pushes that floor towards `eps`.
fn refined_norm_sq(model: &LssModel, start: &[Matrix], observability: bool) -> Result<(f64, f64)> {
    let solvers = ModeSolvers::new(model)?;
    let m = model.num_modes();
    let mut x: Vec<DdMatrix> = start.iter().map(lift).collect();
    for _ in 0..REFINEMENT_STEPS {
        let forcing: Vec<Matrix> =
            (0..m).map(|q| linalg::symmetrize(&dd_residual(model, &x, q, observability))).collect();
        let (delta, _) = gramians::solve_forced(
            model,
            &solvers,
            forcing,
            observability,
            CORRECTION_TOL,
            gramians::DEFAULT_ITER_MAX,
        )?;
        x = x.iter().zip(&delta).map(|(xi, d)| xi.add_f64(d)).collect();
    }
    let mut total = 0.0;
    let mut scale = 0.0;
    for (q, xq) in x.iter().enumerate() {
        let mode = model.mode(q);
        total += if observability {
            lift(&mode.b.transpose()).mul(xq).mul_f64(&mode.b).trace()
        } else {
            lift(&mode.c).mul(xq).mul_f64(&mode.c.transpose()).trace()
        };
        scale += if observability { mode.b.norm_squared() } else { mode.c.norm_squared() } * xq.hi.norm();
    }
    Ok((total, scale))
}

/// H2 norm with refined Gramians, for systems whose norm is tiny relative to
/// the size of their Gramians (error systems).
pub fn h2_norm_refined(model: &LssModel, method: H2Method) -> Result<H2Result> {
    let set = gramians::gramians(model)?;
    let ctrl = || -> Result<f64> {
        let (v, s) = refined_norm_sq(model, &set.p, false)?;
        clamp(v, s)
    };
    let obs = || -> Result<f64> {
        let (v, s) = refined_norm_sq(model, &set.q, true)?;
        clamp(v, s)
    };
    let (norm_sq, via, gap) = match method {
        H2Method::Controllability => (ctrl()?, H2Via::Controllability, None),
        H2Method::Observability => (obs()?, H2Via::Observability, None),
        H2Method::Both => {
            let (c, o) = (ctrl()?, obs()?);
            let denom = c.max(o);
            (c, H2Via::Controllability, Some(if denom == 0.0 { 0.0 } else { (c - o).abs() / denom }))
        }
    };
    Ok(H2Result { norm_sq, norm: norm_sq.sqrt(), via, gramian_meta: Some(set.meta()), duality_gap: gap })
}

pub fn h2_error(a: &LssModel, b: &LssModel) -> Result<H2ErrorReport> {
    h2_error_with(a, b, H2Method::Controllability)
}

pub fn h2_error_with(a: &LssModel, b: &LssModel, method: H2Method) -> Result<H2ErrorReport> {
    let err = error_system(a, b)?;
    let error = h2_norm_refined(&err, method)?;
    let reference = h2_norm(a, method)?;
    let relative = if reference.norm > 0.0 {
        error.norm / reference.norm
    } else if error.norm == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(H2ErrorReport { error, reference, relative })
}

/// Truncated squared H2 norm from the kernel definition: the sum over all
/// admissible sequences of length `<= k_max` of the integrated squared
/// Frobenius norm of the kernel, with a tensorized Gauss–Laguerre rule per
/// dwell time. Each axis is rescaled by twice the decay rate of its mode.
pub fn h2_quadrature_oracle(model: &LssModel, k_max: usize, quad_points: usize) -> Result<H2Result> {
    model::ensure_valid(model)?;
    if model.total_states() > ORACLE_MAX_STATES || k_max == 0 || k_max > ORACLE_MAX_LEVEL {
        return Err(LssError::Refused(format!(
            "quadrature oracle needs at most {ORACLE_MAX_STATES} total states and 1 <= k_max <= {ORACLE_MAX_LEVEL} \
             (got {} states, k_max {k_max})",
            model.total_states()
        )));
    }
    let abscissas = model::check_stability(model)?;
    if let Some(q) = abscissas.iter().position(|&a| a >= 0.0) {
        return Err(LssError::UnstableMode { mode: q + 1, abscissa: abscissas[q] });
    }
    let rule = GaussLaguerre::new(quad_points)?;
    let weights = rule.unweighted();
    let scales: Vec<f64> = abscissas.iter().map(|a| -2.0 * a).collect();
    // exps[q][j] = exp(A_q x_j / c_q)
    let exps: Vec<Vec<Matrix>> = model
        .modes()
        .iter()
        .zip(&scales)
        .map(|(mode, &c)| rule.nodes.iter().map(|&x| (&mode.a * (x / c)).exp()).collect())
        .collect();

    let mut total = 0.0;
    for k in 1..=k_max {
        for seq in sim::admissible_sequences(model.num_modes(), k) {
            total += sequence_integral(model, &seq, &exps, &weights, &scales);
        }
    }
    let norm_sq = clamp(total, total.abs())?;
    Ok(H2Result { norm_sq, norm: norm_sq.sqrt(), via: H2Via::Quadrature, gramian_meta: None, duality_gap: None })
}

/// Integral of `||h_seq||_F^2`, building the kernel from the first active
/// mode (last entry of `seq`) outwards.
fn sequence_integral(model: &LssModel, seq: &[usize], exps: &[Vec<Matrix>], weights: &[f64], scales: &[f64]) -> f64 {
    fn recurse(
        model: &LssModel,
        seq: &[usize],
        pos: usize,
        acc: &Matrix,
        weight: f64,
        exps: &[Vec<Matrix>],
        weights: &[f64],
        scales: &[f64],
    ) -> f64 {
        let q = seq[pos];
        let mut sum = 0.0;
        for (j, e) in exps[q].iter().enumerate() {
            let w = weight * weights[j] / scales[q];
            let next = e * acc;
            sum += if pos == 0 {
                w * (&model.mode(q).c * next).norm_squared()
            } else {
                let coupled = model.coupling(q, seq[pos - 1]) * next;
                recurse(model, seq, pos - 1, &coupled, w, exps, weights, scales)
            };
        }
        sum
    }
    let last = seq.len() - 1;
    recurse(model, seq, last, &model.mode(seq[last]).b, 1.0, exps, weights, scales)
}
