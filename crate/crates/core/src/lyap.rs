//! Dense Sylvester and Lyapunov solvers.
//!
//! The Sylvester equation `A X + X B + C = 0` is solved by Bartels-Stewart
//! back substitution on the real Schur forms of `A` and `B`. Systems with
//! both dimensions at most [`TINY_DIM`] use the vectorized Kronecker system
//! instead; that path also serves as an independent check of the Schur path.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LssError, Result};
use crate::linalg;
use crate::model::Matrix;

/// Largest dimension handled by the vectorized path in [`solve_sylvester`].
pub const TINY_DIM: usize = 3;

/// Relative eigenvalue-sum guard for the ill-posed check.
pub const SINGULARITY_GUARD: f64 = 1e-12;

/// Upper bound on unknowns accepted by the Kronecker solver.
const VECTORIZED_MAX_UNKNOWNS: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    SchurDirect,
    Vectorized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// `||residual||_F / ||rhs||_F`, or the absolute residual when the
    /// right-hand side vanishes.
    pub residual_fro: f64,
    pub method: SolveMethod,
    pub flops_estimate: Option<f64>,
}

/// Real Schur factorization `A = Q T Q^T` kept around for repeated solves.
#[derive(Debug, Clone)]
pub struct SchurForm {
    q: Matrix,
    t: Matrix,
    blocks: Vec<(usize, usize)>,
    eigenvalues: Vec<Complex64>,
    norm_fro: f64,
}

impl SchurForm {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(LssError::validation(format!("matrix must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if !linalg::is_finite(a) {
            return Err(LssError::validation("matrix has non-finite entries"));
        }
        let (q, t) = linalg::real_schur(a)?;
        let blocks = linalg::quasi_blocks(&t);
        let eigenvalues = linalg::schur_eigenvalues(&t);
        Ok(SchurForm { q, t, blocks, eigenvalues, norm_fro: a.norm() })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }
}

fn check_separation(lhs: &[Complex64], rhs: &[Complex64], norm_sum: f64) -> Result<()> {
    let guard = SINGULARITY_GUARD * norm_sum;
    for &l in lhs {
        for &r in rhs {
            if (l + r).norm() < guard || (l + r).norm() == 0.0 {
                return Err(LssError::IllPosed { lhs: l, rhs: r });
            }
        }
    }
    Ok(())
}

/// Solves `A X + X B + C = 0` using precomputed Schur forms of `A` and `B`.
pub fn solve_sylvester_schur(sa: &SchurForm, sb: &SchurForm, c: &Matrix) -> Result<Matrix> {
    let (n, m) = (sa.dim(), sb.dim());
    if c.shape() != (n, m) {
        return Err(LssError::validation(format!("right-hand side is {}x{}, expected {n}x{m}", c.nrows(), c.ncols())));
    }
    check_separation(&sa.eigenvalues, &sb.eigenvalues, sa.norm_fro + sb.norm_fro)?;
    if n == 0 || m == 0 {
        return Ok(Matrix::zeros(n, m));
    }

    let (ta, tb) = (&sa.t, &sb.t);
    // T_A Y + Y T_B = F with X = Q_A Y Q_B^T
    let f = -(sa.q.transpose() * c * &sb.q);
    let mut y = Matrix::zeros(n, m);
    for &(j0, bj) in &sb.blocks {
        let mut rhs = f.columns(j0, bj).into_owned();
        if j0 > 0 {
            rhs -= y.columns(0, j0) * tb.view((0, j0), (j0, bj));
        }
        for &(i0, bi) in sa.blocks.iter().rev() {
            let tail = i0 + bi;
            let mut r = rhs.rows(i0, bi).into_owned();
            if tail < n {
                r -= ta.view((i0, tail), (bi, n - tail)) * y.view((tail, j0), (n - tail, bj));
            }
            let z =
                solve_small(&ta.view((i0, i0), (bi, bi)).into_owned(), &tb.view((j0, j0), (bj, bj)).into_owned(), &r)?;
            y.view_mut((i0, j0), (bi, bj)).copy_from(&z);
        }
    }
    Ok(&sa.q * y * sb.q.transpose())
}

// T Z + Z S = R for blocks of size at most 2x2
fn solve_small(t: &Matrix, s: &Matrix, r: &Matrix) -> Result<Matrix> {
    let (bi, bj) = (t.nrows(), s.nrows());
    if bi == 1 && bj == 1 {
        let d = t[(0, 0)] + s[(0, 0)];
        return Ok(Matrix::from_element(1, 1, r[(0, 0)] / d));
    }
    let k = kron(&Matrix::identity(bj, bj), t) + kron(&s.transpose(), &Matrix::identity(bi, bi));
    let rhs = DMatrix::from_column_slice(bi * bj, 1, r.as_slice());
    let sol = k
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| LssError::Solver("singular diagonal block in Sylvester back substitution".into()))?;
    Ok(Matrix::from_column_slice(bi, bj, sol.as_slice()))
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Solves `sum_i L_i X R_i + C = 0` through the Kronecker form
/// `sum_i (R_i^T (x) L_i) vec(X) = -vec(C)`. Meant for small systems.
pub fn solve_vectorized(terms: &[(&Matrix, &Matrix)], c: &Matrix) -> Result<Matrix> {
    let (n, m) = c.shape();
    if n * m > VECTORIZED_MAX_UNKNOWNS {
        return Err(LssError::Refused(format!(
            "vectorized solve with {} unknowns exceeds the limit of {VECTORIZED_MAX_UNKNOWNS}",
            n * m
        )));
    }
    if n * m == 0 {
        return Ok(Matrix::zeros(n, m));
    }
    let mut k = Matrix::zeros(n * m, n * m);
    for (l, r) in terms {
        if l.shape() != (n, n) || r.shape() != (m, m) {
            return Err(LssError::validation("term shapes do not match the unknown"));
        }
        k += kron(&r.transpose(), l);
    }
    let rhs = -DMatrix::from_column_slice(n * m, 1, c.as_slice());
    let lu = k.full_piv_lu();
    if !lu.is_invertible() {
        return Err(LssError::Solver("vectorized operator is singular".into()));
    }
    let sol = lu.solve(&rhs).ok_or_else(|| LssError::Solver("vectorized operator is singular".into()))?;
    Ok(Matrix::from_column_slice(n, m, sol.as_slice()))
}

pub fn sylvester_residual(a: &Matrix, b: &Matrix, c: &Matrix, x: &Matrix) -> f64 {
    let res = (a * x + x * b + c).norm();
    let scale = c.norm();
    if scale == 0.0 {
        res
    } else {
        res / scale
    }
}

/// Solves `A X + X B + C = 0`, choosing the vectorized path for tiny systems.
pub fn solve_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<(Matrix, SolveReport)> {
    let method =
        if a.nrows() <= TINY_DIM && b.nrows() <= TINY_DIM { SolveMethod::Vectorized } else { SolveMethod::SchurDirect };
    solve_sylvester_with(a, b, c, method)
}

pub fn solve_sylvester_with(a: &Matrix, b: &Matrix, c: &Matrix, method: SolveMethod) -> Result<(Matrix, SolveReport)> {
    let sa = SchurForm::new(a)?;
    let sb = SchurForm::new(b)?;
    if !linalg::is_finite(c) {
        return Err(LssError::validation("right-hand side has non-finite entries"));
    }
    let (n, m) = (a.nrows() as f64, b.nrows() as f64);
    let (x, flops) = match method {
        SolveMethod::SchurDirect => {
            let x = solve_sylvester_schur(&sa, &sb, c)?;
            (x, 10.0 * (n.powi(3) + m.powi(3)) + 2.5 * (n * n * m + n * m * m))
        }
        SolveMethod::Vectorized => {
            check_separation(&sa.eigenvalues, &sb.eigenvalues, sa.norm_fro + sb.norm_fro)?;
            let ident_n = Matrix::identity(a.nrows(), a.nrows());
            let ident_m = Matrix::identity(b.nrows(), b.nrows());
            let x = solve_vectorized(&[(a, &ident_m), (&ident_n, b)], c)?;
            (x, (2.0 / 3.0) * (n * m).powi(3))
        }
    };
    let residual_fro = sylvester_residual(a, b, c, &x);
    Ok((x, SolveReport { residual_fro, method, flops_estimate: Some(flops) }))
}

/// Solves `A P + P A^T + W = 0` and returns the symmetrized solution.
pub fn solve_lyapunov(a: &Matrix, w: &Matrix) -> Result<(Matrix, SolveReport)> {
    let at = a.transpose();
    let (p, mut report) = solve_sylvester(a, &at, w)?;
    let p = linalg::symmetrize(&p);
    report.residual_fro = sylvester_residual(a, &at, w, &p);
    Ok((p, report))
}

pub fn solve_lyapunov_with(a: &Matrix, w: &Matrix, method: SolveMethod) -> Result<(Matrix, SolveReport)> {
    let at = a.transpose();
    let (p, mut report) = solve_sylvester_with(a, &at, w, method)?;
    let p = linalg::symmetrize(&p);
    report.residual_fro = sylvester_residual(a, &at, w, &p);
    Ok((p, report))
}

/// Cached Schur forms of `A` and `A^T` for repeated Lyapunov solves with a
/// fixed coefficient, e.g. `A P + P A^T + W = 0` or (transposed) the
/// observability form `A^T Q + Q A + W = 0`.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    a: SchurForm,
    at: SchurForm,
}

impl LyapunovSolver {
    pub fn new(a: &Matrix) -> Result<Self> {
        Ok(LyapunovSolver { a: SchurForm::new(a)?, at: SchurForm::new(&a.transpose())? })
    }

    /// `A P + P A^T + W = 0`.
    pub fn solve(&self, w: &Matrix) -> Result<Matrix> {
        Ok(linalg::symmetrize(&solve_sylvester_schur(&self.a, &self.at, w)?))
    }

    /// `A^T Q + Q A + W = 0`.
    pub fn solve_transposed(&self, w: &Matrix) -> Result<Matrix> {
        Ok(linalg::symmetrize(&solve_sylvester_schur(&self.at, &self.a, w)?))
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        self.a.eigenvalues()
    }
}
